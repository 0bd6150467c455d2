#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "config.hpp"
#include "io.hpp"
#include "verify.hpp"

namespace qsmlab {

struct CommandResult {
  int failures = 0;
  std::vector<std::string> files;
  Json summary;
};

namespace detail {
inline std::string out_path(const std::string& dir, const std::string& name) {
  std::filesystem::create_directories(dir);
  return (std::filesystem::path(dir) / name).string();
}

inline Json cells_json(const CellGrid& grid, const CellSet& cells) {
  Json j;
  j["count"] = cells.size();
  if (!cells.empty()) {
    j["first"] = cells.front();
    j["last"] = cells.back();
    j["lo"] = grid.cell_lo(cells.front());
    j["hi"] = grid.cell_hi(cells.back());
  }
  return j;
}

// Union of grid closures of the invariant W-control sets, or Q when that union is not invariant in Q.
inline CellSet default_k(const Model& m, const CellSet& w) {
  auto g = symbolic_image(m.spec, m.grid, m.quad, w);
  auto a = find_w_control_sets(m.grid, g);
  CellSet k;
  for (const auto& s : a.sets)
    if (s.invariant) k = set_union(k, grid_closure(m.grid, g, s.cells));
  if (k.empty() || !invariant_in_q(m.spec, m.grid, m.quad, k).holds) return m.grid.all_cells();
  return k;
}

inline std::vector<int> default_perm(const SystemSpec& s) {
  std::vector<int> p(s.stateCount);
  for (int i = 0; i < s.stateCount; ++i) p[i] = s.stateCount - 1 - i;
  return p;
}
}  // namespace detail

inline Model config_model(const RunConfig& c) {
  try {
    return make_model(c.spec, config_grid(c), config_quadrature(c), c.qsm);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

inline CommandResult cmd_qsm(const RunConfig& c, const std::string& dir) {
  CommandResult res;
  Model m = config_model(c);
  auto check = check_qsm(m.ulam.P, m.qsm);
  auto supp = m.qsm.support();
  res.files.push_back(detail::out_path(dir, "qsm.csv"));
  write_csv(res.files.back(), qsm_table(m.grid, m.qsm));
  res.files.push_back(detail::out_path(dir, "ulam.csv"));
  write_csv(res.files.back(), ulam_table(m.ulam));
  Json s;
  s["rho"] = m.qsm.rho;
  s["residual"] = m.qsm.residual;
  s["iterations"] = m.qsm.iterations;
  s["converged"] = m.qsm.converged;
  s["message"] = m.qsm.message;
  s["row_sum_defect"] = check.rowSumDefect;
  s["k_step_residuals"] = check.kStep;
  s["support"] = detail::cells_json(m.grid, supp);
  if (m.spec.family == Family::circle1 && !m.grid.full_circle()) {
    try {
      double d = fixed_point(m.spec, -1.0, m.grid.qlo, m.grid.qhi);
      s["lower_fixed_point"] = d;
      bool inside = supp.empty() || m.grid.cell_lo(supp.front()) >= d - m.grid.width();
      s["support_inside_interval"] = inside;
    } catch (const std::domain_error&) {
      s["lower_fixed_point"] = nullptr;
    }
  }
  if (!m.qsm.converged) res.failures = 1;
  res.summary = s;
  res.files.push_back(detail::out_path(dir, "summary.json"));
  write_json(res.files.back(), s);
  return res;
}

inline CommandResult cmd_control_sets(const RunConfig& c, const std::string& dir) {
  CommandResult res;
  auto grid = config_grid(c);
  auto quad = config_quadrature(c);
  auto w = config_w(c, grid);
  auto g = symbolic_image(c.spec, grid, quad, w);
  auto a = find_w_control_sets(grid, g);
  res.files.push_back(detail::out_path(dir, "controlsets.csv"));
  write_csv(res.files.back(), controlsets_table(grid, a));
  res.files.push_back(detail::out_path(dir, "symbolic.csv"));
  write_csv(res.files.back(), symbolic_table(g));
  Json s;
  s["sets"] = Json::array();
  for (const auto& set : a.sets) {
    Json j = detail::cells_json(grid, set.cells);
    j["invariant"] = set.invariant;
    j["transitivity_cells"] = set.transitivityCells.size();
    if (set.exitWitness)
      j["exit_witness"] = {{"cell", set.exitWitness->cell},
                           {"node", quad.label(set.exitWitness->node)},
                           {"target", set.exitWitness->target}};
    s["sets"].push_back(j);
  }
  s["rejected"] = a.rejected.size();
  s["touching_closures"] = a.touchingClosures;
  s["edges"] = g.edge_count();
  res.summary = s;
  res.files.push_back(detail::out_path(dir, "summary.json"));
  write_json(res.files.back(), s);
  return res;
}

inline CommandResult cmd_entropy(const RunConfig& c, const std::string& dir, bool base2) {
  CommandResult res;
  Model m = config_model(c);
  const double u = base2 ? 1.0 / std::log(2.0) : 1.0;
  CsvTable words, ent, parts, fb;
  Json s;
  s["log_base"] = base2 ? "2" : "e";
  s["label"] = "upper bound on the metric invariance entropy";
  s["rho"] = m.qsm.rho;
  s["per_tau"] = Json::array();
  EntropyOptions eo = config_entropy(c);
  auto ub = entropy_upper_bound(m.grid, m.qsm.eta, m.qsm.rho, m.spec, m.quad, m.ulam, c.tauList, c.coarsenessList,
                                eo);
  for (const auto& e : ub.entries) {
    Json je;
    je["tau"] = e.tau;
    je["h_metric"] = number_json(u * e.hMetric);
    je["h_incremental"] = number_json(u * e.hIncremental);
    je["h_topological"] = number_json(u * e.hTopological);
    je["best_coarseness"] = e.bestCoarseness;
    je["all_truncated"] = e.allTruncated;
    je["runs"] = Json::array();
    for (const auto& r : e.runs) {
      Json jr;
      jr["coarseness"] = r.coarseness;
      jr["feasible"] = r.feasible;
      jr["h_metric"] = number_json(u * r.metric.estimate);
      jr["h_metric_window_min"] = number_json(u * r.metric.windowMin);
      jr["h_incremental"] = number_json(u * r.incremental.estimate);
      if (r.feasible) {
        jr["elements"] = r.partition->size();
        jr["depth"] = r.tree.depth();
        jr["truncated"] = r.tree.truncated;
        jr["nodes"] = r.tree.nodeCount;
        jr["h_topological"] = number_json(u * r.topo.hTop);
        jr["h_topological_fixed_feedback"] = number_json(u * r.topo.hTopFixed);
        int budgetBad = 0, keBad = 0, cmpBad = 0, cmpResidualBad = 0;
        for (const auto& b : budget_checks(r.tree)) budgetBad += !b.holds;
        for (const auto& k : ke_checks(r.tree)) keBad += !k.holds;
        for (const auto& row : comparison_rows(r.metric, r.tree, r.topo)) {
          cmpBad += !row.holds;
          cmpResidualBad += !row.residualHolds;
        }
        jr["budget_violations"] = budgetBad;
        jr["ke_violations"] = keBad;
        jr["comparison_violations"] = cmpBad;
        jr["comparison_with_residual_violations"] = cmpResidualBad;
        append_words(words, r.tree, r.coarseness);
        append_partition(parts, fb, *r.partition, r.coarseness, m.quad);
      }
      append_entropy(ent, r, base2);
      je["runs"].push_back(jr);
    }
    s["per_tau"].push_back(je);
  }
  s["h_upper"] = number_json(u * ub.value);
  for (auto [name, table] : {std::pair<const char*, CsvTable*>{"words.csv", &words}, {"entropy.csv", &ent},
                             {"partitions.csv", &parts}, {"feedback.csv", &fb}}) {
    if (table->header.empty()) continue;
    res.files.push_back(detail::out_path(dir, name));
    write_csv(res.files.back(), *table);
  }
  res.summary = s;
  res.files.push_back(detail::out_path(dir, "summary.json"));
  write_json(res.files.back(), s);
  return res;
}

inline TheoremReport coder_report(const Model& m, int tau, int coarseness, int nMax, int trials, int steps,
                                  std::uint64_t seed, double exitTol) {
  auto part = build_invariant_partition(m.grid, m.qsm.eta, tau, coarseness, m.spec, m.quad);
  if (!part) return skipped_report("coder_controller", "no invariant partition");
  EntropyOptions eo;
  eo.nMax = nMax;
  eo.topological = false;
  auto run = run_partition(*part, m.qsm.eta, m.qsm.rho, m.spec, m.grid, m.quad, m.ulam, eo);
  auto cc = coder_controller_from_partition(*part, m.grid);
  auto viaCoder = entropy_via_coder(cc, run.tree);
  bool same = viaCoder.H.size() == run.metric.H.size();
  for (std::size_t n = 0; same && n < viaCoder.H.size(); ++n)
    same = viaCoder.H[n] == run.metric.H[n] && viaCoder.rate[n] == run.metric.rate[n];
  auto loop = simulate_loop(cc, m.spec, m.grid, m.quad, m.qsm.eta, steps, trials, seed);
  TheoremReport r;
  r.id = "coder_controller";
  r.tolerance = exitTol;
  r.add("bitwise_equal", same ? 1.0 : 0.0);
  r.add("exit_fraction", loop.exitFraction);
  r.add("trials", trials);
  r.verdict = same && loop.exitFraction <= exitTol ? Verdict::pass : Verdict::fail;
  if (r.verdict == Verdict::fail) r.reason = same ? "closed loop leaves Q too often" : "coder entropy differs";
  return r;
}

inline CommandResult cmd_verify(const RunConfig& c, const std::string& dir) {
  CommandResult res;
  Model m = config_model(c);
  auto w = config_w(c, m.grid);
  CellSet k = c.hasK ? cells_in(m.grid, c.kStates, c.klo, c.khi) : detail::default_k(m, w);
  KvsQOptions ko = config_kvsq(c);
  const int tau = c.tauList.back();
  const int co = c.coarsenessList.front();
  std::vector<TheoremReport> reports;
  auto wants = [&](const std::string& id) { return std::find(c.checks.begin(), c.checks.end(), id) != c.checks.end(); };
  auto guarded = [&](const std::string& id, auto&& fn) {
    try {
      reports.push_back(fn());
    } catch (const std::invalid_argument& e) {
      reports.push_back(skipped_report(id, e.what()));
    }
  };
  if (wants("conjugacy")) {
    guarded("conjugacy", [&] {
      if (m.spec.is_circle()) return check_conjugacy(m, c.shift, tau, co, c.nMax);
      auto perm = c.perm.empty() ? detail::default_perm(m.spec) : c.perm;
      return check_relabel_conjugacy(m, perm, tau, co, c.nMax);
    });
  }
  if (wants("k_vs_q")) guarded("k_vs_q", [&] { return check_k_vs_q(m, k, ko); });
  if (wants("incremental_k_vs_q")) guarded("incremental_k_vs_q", [&] { return check_incremental_k_vs_q(m, k, ko); });
  if (wants("comparison"))
    for (int t : c.tauList)
      for (int q : c.coarsenessList)
        guarded("comparison", [&] {
          auto r = check_comparison(m, t, q, c.nMax);
          r.notes.push_back("tau=" + std::to_string(t) + " coarseness=" + std::to_string(q));
          return r;
        });
  if (wants("support")) {
    auto g = symbolic_image(m.spec, m.grid, m.quad, w);
    reports.push_back(check_support(m, find_w_control_sets(m.grid, g)));
  }
  if (wants("invariant_sets")) guarded("invariant_sets", [&] { return check_invariant_sets(m, w, ko); });
  if (wants("disjoint_union") && !c.components.empty()) {
    std::vector<CellSet> comps;
    for (const auto& states : c.components) comps.push_back(cells_in(m.grid, states, 0.0, 0.0));
    guarded("disjoint_union", [&] { return check_disjoint_union(m, comps, tau, co, c.nMax); });
  }
  if (wants("coder_controller"))
    guarded("coder_controller", [&] {
      return coder_report(m, tau, co, c.nMax, c.trials, c.steps, c.seed, m.grid.finite() ? 0.0 : 0.01);
    });
  Json s;
  s["reports"] = Json::array();
  int pass = 0, fail = 0, skip = 0;
  for (const auto& r : reports) {
    s["reports"].push_back(report_json(r));
    pass += r.verdict == Verdict::pass;
    fail += r.verdict == Verdict::fail;
    skip += r.verdict == Verdict::skipped;
  }
  s["summary"] = {{"pass", pass}, {"fail", fail}, {"skipped", skip}, {"log_base", "e"}};
  res.failures = fail;
  res.summary = s;
  res.files.push_back(detail::out_path(dir, "reports.json"));
  write_json(res.files.back(), s);
  std::ostringstream table;
  for (const auto& r : reports)
    table << r.id << "  " << verdict_name(r.verdict) << (r.reason.empty() ? "" : "  " + r.reason) << '\n';
  res.files.push_back(detail::out_path(dir, "reports.txt"));
  std::ofstream(res.files.back()) << table.str();
  return res;
}

inline Json example_config(const std::string& which) {
  Json j;
  j["partition"] = {{"tauList", {1, 2, 3}}, {"coarsenessList", {8, 64, 128, 512}}, {"feedbackRule", "lexicographic"}};
  j["grid"] = {{"cells", 512}, {"samplesPerCell", 5}};
  j["quadrature"] = {{"m", 8}};
  j["entropy"] = {{"nMax", 8}, {"nodeBudget", 200000}};
  j["verify"] = {{"equalityTol", 0.05},
                 {"shift", 0.25},
                 {"checks", {"conjugacy", "k_vs_q", "incremental_k_vs_q", "comparison", "support", "invariant_sets",
                             "coder_controller"}}};
  j["seed"] = 12345;
  if (which == "ex1") {
    j["system"] = {{"family", "circle1"}, {"sigma", 0.1}, {"A", 0.05}, {"alpha", 0.07}};
    j["Q"] = {{"lo", 0.2}, {"hi", 0.5}};
  } else if (which == "ex2") {
    j["system"] = {{"family", "circle2"}, {"sigma", 0.1}, {"A", 0.05}, {"alpha", 0.07}};
    j["Q"] = {{"lo", 0.1}, {"hi", 0.7}};
    j["W"] = {{"lo", 0.1}, {"hi", 0.7}};
  } else {
    throw ConfigError("unknown example '" + which + "' (expected ex1 or ex2)");
  }
  return j;
}

inline CommandResult cmd_example(const std::string& which, const std::vector<std::string>& overrides,
                                 const std::string& dir, bool base2) {
  Json doc = example_config(which);
  for (const auto& o : overrides) apply_override(doc, o);
  RunConfig c = parse_config(doc);
  CommandResult res;
  auto q = cmd_qsm(c, dir + "/qsm");
  auto cs = cmd_control_sets(c, dir + "/control-sets");
  auto en = cmd_entropy(c, dir + "/entropy", base2);
  auto ve = cmd_verify(c, dir + "/verify");
  for (auto* r : {&q, &cs, &en, &ve}) res.files.insert(res.files.end(), r->files.begin(), r->files.end());
  res.failures = q.failures + ve.failures;
  const double alpha0 = c.spec.sigma - c.spec.A;
  std::ostringstream os;
  os << which << ": sigma=" << c.spec.sigma << " A=" << c.spec.A << " alpha=" << c.spec.alpha
     << " alpha_0=" << alpha0 << '\n';
  if (c.spec.alpha <= alpha0)
    os << "regime mismatch: alpha <= alpha_0, the invariant control set is smaller than the circle\n";
  os << "rho=" << q.summary["rho"] << " support=" << q.summary["support"].dump() << '\n';
  if (q.summary.contains("lower_fixed_point"))
    os << "lower fixed point d(alpha)=" << q.summary["lower_fixed_point"]
       << " support inside [d(alpha), hi]: " << q.summary.value("support_inside_interval", false) << '\n';
  int invariant = 0;
  for (const auto& s : cs.summary["sets"]) invariant += s["invariant"].get<bool>();
  os << "control sets: " << cs.summary["sets"].size() << " (invariant: " << invariant << ")\n";
  for (const auto& s : cs.summary["sets"])
    os << "  [" << s.value("lo", 0.0) << ", " << s.value("hi", 0.0) << "] invariant=" << s["invariant"]
       << (s.contains("exit_witness") ? " exit witness " + s["exit_witness"].dump() : "") << '\n';
  os << "entropy upper bound (" << (base2 ? "bits" : "nats") << "): " << en.summary["h_upper"] << '\n';
  for (const auto& r : ve.summary["reports"]) os << "  " << r["id"].get<std::string>() << ": " << r["verdict"].get<std::string>() << '\n';
  res.files.push_back(detail::out_path(dir, "narrative.txt"));
  std::ofstream(res.files.back()) << os.str();
  res.summary = {{"qsm", q.summary}, {"control_sets", cs.summary}, {"entropy", en.summary}, {"verify", ve.summary}};
  return res;
}

}  // namespace qsmlab
