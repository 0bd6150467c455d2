#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "fixtures.hpp"
#include "qsmlab/cli.hpp"

using namespace qsmlab;
namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("qsmlab_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  std::string cmd = std::string(QSMLAB_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string config(const std::string& name) { return std::string(QSMLAB_SOURCE_DIR) + "/configs/" + name; }
}  // namespace

TEST(Io, NumberFormatRoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17})
    EXPECT_EQ(parse_double(fmt(v)), v);
  EXPECT_EQ(fmt(std::numeric_limits<double>::infinity()), "inf");
  EXPECT_TRUE(std::isinf(parse_double("inf")));
  EXPECT_TRUE(std::isnan(parse_double("nan")));
}

TEST(Io, IntListRoundTrip) {
  EXPECT_EQ(join_ints({3, 0, 12}), "3-0-12");
  EXPECT_EQ(parse_ints("3-0-12"), (std::vector<int>{3, 0, 12}));
  EXPECT_TRUE(parse_ints("").empty());
}

TEST(Io, QsmAndUlamCsvRoundTrip) {
  auto m = fixtures::example1(32);
  auto dir = scratch("qsm_csv");
  write_csv((dir / "qsm.csv").string(), qsm_table(m.grid, m.qsm));
  write_csv((dir / "ulam.csv").string(), ulam_table(m.ulam));
  EXPECT_EQ(eta_from_table(read_csv((dir / "qsm.csv").string())), m.qsm.eta);
  auto P = ulam_from_table(read_csv((dir / "ulam.csv").string()), m.grid.cellCount);
  EXPECT_EQ(P.values, m.ulam.P.values);
  EXPECT_EQ(P.colIdx, m.ulam.P.colIdx);
}

TEST(Io, WordsCsvRoundTrip) {
  auto m = fixtures::fin3();
  auto p = build_invariant_partition(m.grid, m.qsm.eta, 1, 1, m.spec, m.quad);
  EntropyOptions o;
  o.nMax = 4;
  auto run = run_partition(*p, m.qsm.eta, m.qsm.rho, m.spec, m.grid, m.quad, m.ulam, o);
  CsvTable t;
  append_words(t, run.tree, 1);
  auto dir = scratch("words_csv");
  write_csv((dir / "words.csv").string(), t);
  auto rows = words_from_table(read_csv((dir / "words.csv").string()));
  ASSERT_EQ(rows.size(), run.tree.nodeCount);
  std::size_t k = 0;
  for (int d = 1; d <= run.tree.depth(); ++d)
    for (int i = 0; i < static_cast<int>(run.tree.levels[d - 1].size()); ++i, ++k) {
      EXPECT_EQ(rows[k].word, run.tree.word(d, i));
      EXPECT_EQ(rows[k].mass, run.tree.levels[d - 1][i].mass);
    }
}

TEST(Io, ControlSetsCsvRoundTrip) {
  auto m = fixtures::two_basin();
  auto g = symbolic_image(m.spec, m.grid, m.quad);
  auto a = find_w_control_sets(m.grid, g);
  auto dir = scratch("cs_csv");
  write_csv((dir / "cs.csv").string(), controlsets_table(m.grid, a));
  auto back = controlsets_from_table(read_csv((dir / "cs.csv").string()));
  ASSERT_EQ(back.size(), a.sets.size());
  for (std::size_t s = 0; s < back.size(); ++s) {
    EXPECT_EQ(back[s].first, a.sets[s].cells);
    EXPECT_EQ(back[s].second, a.sets[s].invariant);
  }
}

TEST(Io, MissingColumnThrows) {
  CsvTable t{{"a"}, {}};
  EXPECT_THROW(t.column("b"), std::runtime_error);
}

TEST(Config, OverridesNestedKeys) {
  Json doc = Json::object();
  apply_override(doc, "grid.cells=64");
  apply_override(doc, "system.family=circle2");
  apply_override(doc, "partition.tauList=[1,2]");
  EXPECT_EQ(doc["grid"]["cells"], 64);
  EXPECT_EQ(doc["system"]["family"], "circle2");
  auto c = parse_config(doc);
  EXPECT_EQ(c.cells, 64);
  EXPECT_EQ(c.spec.family, Family::circle2);
  EXPECT_EQ(c.tauList, (std::vector<int>{1, 2}));
  EXPECT_THROW(apply_override(doc, "novalue"), ConfigError);
  EXPECT_THROW(apply_override(doc, "a..b=1"), ConfigError);
}

TEST(Config, RejectsInvalidValues) {
  for (const char* o : {"grid.cells=0", "system.family=\"torus\"", "entropy.logBase=\"3\"", "partition.tauList=[0]",
                        "Q.lo=1.5", "qsm.tol=-1", "grid.cells=\"many\""}) {
    Json doc = Json::object();
    apply_override(doc, o);
    EXPECT_THROW(parse_config(doc), ConfigError) << o;
  }
}

TEST(Config, FiniteSystemFromFile) {
  auto c = parse_config(load_json(config("fin3.json")));
  EXPECT_TRUE(c.finite());
  EXPECT_EQ(c.qStates, (std::vector<int>{0, 1}));
  EXPECT_EQ(c.perm, (std::vector<int>{1, 0, 2}));
  auto g = config_grid(c);
  EXPECT_EQ(g.cellCount, 2);
  EXPECT_THROW(load_json("/nonexistent/config.json"), ConfigError);
}

TEST(Commands, QsmWritesSummary) {
  auto c = parse_config(load_json(config("fin3.json")));
  auto dir = scratch("cmd_qsm");
  auto r = cmd_qsm(c, dir.string());
  EXPECT_EQ(r.failures, 0);
  EXPECT_TRUE(fs::exists(dir / "qsm.csv"));
  EXPECT_NEAR(r.summary["rho"].get<double>(), fixtures::kRhoFin3, 1e-9);
}

TEST(Commands, EntropyInBits) {
  auto c = parse_config(load_json(config("fin3.json")));
  auto dir = scratch("cmd_entropy");
  cmd_entropy(c, (dir / "e").string(), false);
  cmd_entropy(c, (dir / "b").string(), true);
  auto e = read_csv((dir / "e" / "entropy.csv").string());
  auto b = read_csv((dir / "b" / "entropy.csv").string());
  const int h = e.column("H");
  ASSERT_EQ(e.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < e.rows.size(); ++i)
    EXPECT_NEAR(parse_double(b.rows[i][h]), parse_double(e.rows[i][h]) / std::log(2.0), 1e-12);
}

TEST(Binary, Fin3VerifyPasses) {
  auto dir = scratch("bin_fin3");
  EXPECT_EQ(run_cli("verify --config " + config("fin3.json") + " --out " + dir.string()), 0);
  EXPECT_TRUE(fs::exists(dir / "reports.json"));
}

TEST(Binary, ConfigErrorsExit64) {
  auto dir = scratch("bin_err");
  EXPECT_EQ(run_cli("qsm --config /nonexistent.json --out " + dir.string()), 64);
  EXPECT_EQ(run_cli("qsm --config " + config("fin3.json") + " --override grid.cells=0 --override system.family=circle1 --out " +
                    dir.string()),
            64);
  EXPECT_EQ(run_cli("frobnicate"), 64);
  EXPECT_EQ(run_cli("example ex3"), 64);
}

TEST(Binary, ExitCodeCountsFailures) {
  // Equality tolerance below zero cannot hold, so the K-vs-Q check fails.
  auto dir = scratch("bin_fail");
  int code = run_cli("verify --config " + config("fin3.json") +
                     " --override verify.equalityTol=-1 --override 'verify.checks=[\"k_vs_q\"]' --out " + dir.string());
  EXPECT_EQ(code, 1);
}
