#include <algorithm>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"

#include "qsmlab/cli.hpp"

using namespace qsmlab;

namespace {

constexpr int kConfigError = 64;

RunConfig load(const std::string& path, const std::vector<std::string>& overrides) {
  Json doc = path.empty() ? Json::object() : load_json(path);
  for (const auto& o : overrides) apply_override(doc, o);
  std::string base = path.empty() ? "." : std::filesystem::path(path).parent_path().string();
  return parse_config(doc, base.empty() ? "." : base);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"quasi-stationary measures, invariant partitions and invariance entropy"};
  app.require_subcommand(1);
  std::string config, out = "out", logBase = "e", which;
  std::vector<std::string> overrides;
  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", config, "configuration file (JSON)");
    sub->add_option("--out", out, "output directory");
    sub->add_option("--override", overrides, "key=value with a dotted key; repeatable")->take_all();
    sub->add_option("--log-base", logBase, "entropy unit")->check(CLI::IsMember({"e", "2"}));
  };
  auto* qsm = app.add_subcommand("qsm", "quasi-stationary measure on Q");
  auto* cs = app.add_subcommand("control-sets", "W-control sets and their invariance");
  auto* ent = app.add_subcommand("entropy", "partitions, word masses and entropies");
  auto* ver = app.add_subcommand("verify", "theorem checks; exit code counts failures");
  auto* ex = app.add_subcommand("example", "canned example pipeline");
  for (auto* s : {qsm, cs, ent, ver, ex}) common(s);
  ex->add_option("which", which, "ex1 or ex2")->required()->check(CLI::IsMember({"ex1", "ex2"}));
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : kConfigError;
  }
  try {
    CommandResult r;
    if (ex->parsed()) {
      if (logBase != "e") overrides.push_back("entropy.logBase=\"" + logBase + "\"");
      r = cmd_example(which, overrides, out, logBase == "2");
    } else {
      RunConfig c = load(config, overrides);
      const bool base2 = logBase == "2" || c.logBase == "2";
      if (qsm->parsed()) r = cmd_qsm(c, out);
      else if (cs->parsed()) r = cmd_control_sets(c, out);
      else if (ent->parsed()) r = cmd_entropy(c, out, base2);
      else r = cmd_verify(c, out);
    }
    for (const auto& f : r.files) std::cout << f << '\n';
    if (r.failures > 0) std::cerr << r.failures << " failure(s)\n";
    return std::min(r.failures, 63);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
