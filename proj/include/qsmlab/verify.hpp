#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "controlsets.hpp"
#include "discretization.hpp"
#include "entropy.hpp"
#include "partitions.hpp"
#include "qsm.hpp"
#include "systems.hpp"

namespace qsmlab {

enum class Verdict { pass, fail, skipped };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::pass: return "pass";
    case Verdict::fail: return "fail";
    case Verdict::skipped: return "skipped";
  }
  return "?";
}

/** \brief Outcome of one theorem check with the numbers it compared. */
struct TheoremReport {
  std::string id;
  std::vector<std::pair<std::string, double>> quantities;
  double tolerance = 0.0;
  Verdict verdict = Verdict::skipped;
  std::string reason;
  std::vector<std::string> assumed;
  std::vector<std::string> notes;
  std::vector<std::string> artifacts;

  void add(const std::string& k, double v) { quantities.push_back({k, v}); }
  double get(const std::string& k) const {
    for (const auto& [name, v] : quantities)
      if (name == k) return v;
    return std::numeric_limits<double>::quiet_NaN();
  }
  bool passed() const { return verdict == Verdict::pass; }
};

inline TheoremReport skipped_report(const std::string& id, const std::string& reason) {
  TheoremReport r;
  r.id = id;
  r.verdict = Verdict::skipped;
  r.reason = reason;
  return r;
}

/** \brief System, grid, quadrature, Ulam operator and QSM computed together. */
struct Model {
  SystemSpec spec;
  CellGrid grid;
  ControlQuadrature quad;
  UlamOperator ulam;
  QuasiStationaryMeasure qsm;
};

inline Model make_model(const SystemSpec& spec, const CellGrid& grid, const ControlQuadrature& quad,
                        const QsmOptions& opt = {}) {
  Model m{spec, grid, quad, assemble_ulam(spec, grid, quad), {}};
  m.qsm = power_qsm(m.ulam.P, opt);
  return m;
}

inline const char* nonsingular_assumption() { return "maps nonsingular with respect to eta"; }

// Conjugate model under a cell bijection cellMap (cell of model 1 -> cell of model 2).
inline TheoremReport check_conjugacy_models(const Model& m1, const Model& m2, const std::vector<int>& cellMap,
                                            int tau, int coarseness, int nMax, double tol = 1e-9) {
  TheoremReport r;
  r.id = "conjugacy";
  r.tolerance = tol;
  r.add("rho1", m1.qsm.rho);
  r.add("rho2", m2.qsm.rho);
  const double drho = std::abs(m1.qsm.rho - m2.qsm.rho);
  r.add("rho_difference", drho);
  auto part = build_invariant_partition(m1.grid, m1.qsm.eta, tau, coarseness, m1.spec, m1.quad);
  if (!part) {
    r.verdict = drho < tol ? Verdict::pass : Verdict::fail;
    r.reason = "no invariant partition; only rho compared";
    return r;
  }
  InvariantPartition p2 = *part;
  auto push = [&](const CellSet& s) {
    CellSet o;
    for (int c : s) o.push_back(cellMap[c]);
    std::sort(o.begin(), o.end());
    return o;
  };
  for (auto& e : p2.elements) e = push(e);
  p2.nullCells = push(p2.nullCells);
  p2.domain = push(p2.domain);
  WordTreeOptions wo;
  wo.nMax = nMax;
  auto a1 = admissible_control_sets(*part, m1.spec, m1.grid, m1.quad);
  auto a2 = admissible_control_sets(p2, m2.spec, m2.grid, m2.quad);
  auto h1 = metric_entropy(word_masses(*part, a1, m1.qsm.eta, m1.qsm.rho, m1.ulam, m1.quad, wo));
  auto h2 = metric_entropy(word_masses(p2, a2, m2.qsm.eta, m2.qsm.rho, m2.ulam, m2.quad, wo));
  double dh = h1.H.size() == h2.H.size() ? 0.0 : std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < std::min(h1.H.size(), h2.H.size()); ++n) dh = std::max(dh, std::abs(h1.H[n] - h2.H[n]));
  r.add("depth1", static_cast<double>(h1.H.size()));
  r.add("depth2", static_cast<double>(h2.H.size()));
  r.add("max_H_difference", dh);
  r.verdict = drho < tol && dh < tol ? Verdict::pass : Verdict::fail;
  if (r.verdict == Verdict::fail) r.reason = "rho or H_n sequences differ beyond tolerance";
  return r;
}

// Rotation by c on a circle system; grid 2 is grid 1 translated by c.
inline TheoremReport check_conjugacy(const Model& m1, double c, int tau, int coarseness, int nMax,
                                     double tol = 1e-9) {
  if (!m1.spec.is_circle()) return skipped_report("conjugacy", "shift conjugacy needs a circle system");
  if (m1.grid.full_circle()) {
    const double k = c / m1.grid.width();
    if (std::abs(k - std::round(k)) > 1e-9) throw std::invalid_argument("shift is not a multiple of the cell width");
  }
  CellGrid g2 = m1.grid;
  g2.qlo = m1.grid.qlo + c;
  g2.qhi = m1.grid.qhi + c;
  Model m2 = make_model(shifted(m1.spec, c), g2, m1.quad);
  return check_conjugacy_models(m1, m2, m1.grid.all_cells(), tau, coarseness, nMax, tol);
}

// Relabelling of a finite system by a state permutation perm[old] = new.
inline TheoremReport check_relabel_conjugacy(const Model& m1, const std::vector<int>& perm, int tau,
                                             int coarseness, int nMax, double tol = 1e-9) {
  SystemSpec s2 = relabeled(m1.spec, perm);
  std::vector<int> q2;
  for (int st : m1.grid.states) q2.push_back(perm[st]);
  CellGrid g2 = build_finite_grid(s2, q2);
  Model m2 = make_model(s2, g2, m1.quad);
  std::vector<int> cellMap(m1.grid.cellCount);
  for (int i = 0; i < m1.grid.cellCount; ++i) cellMap[i] = g2.cellOfState[perm[m1.grid.states[i]]];
  return check_conjugacy_models(m1, m2, cellMap, tau, coarseness, nMax, tol);
}

struct KvsQOptions {
  std::vector<int> tauList{1, 2, 3};
  std::vector<int> coarsenessList{1, 2, 4, 8};
  EntropyOptions entropy;
  double equalityTol = 0.05;
  bool equality = true;
  double guard = 1e-12;
};

/** \brief Entropy runs for Q and K sharing one measure. */
struct KvsQRuns {
  UpperBound q;
  UpperBound k;
  std::vector<std::string> failures;  // per-partition inequality violations
  double worstExcess = -std::numeric_limits<double>::infinity();
  bool coverTotal = false;
};


// Q family, its restrictions to K, direct K family and (when the cover is total)
// extensions of the K family back to Q. Per-partition restriction inequalities
// are checked with slack(n) added to the Q side.
inline KvsQRuns k_vs_q_runs(const Model& m, const CellSet& k, const KvsQOptions& opt, bool incremental) {
  KvsQRuns out;
  const auto& eta = m.qsm.eta;
  const double rho = m.qsm.rho;
  CellSet qDomain = m.grid.all_cells();
  std::optional<SteeringCover> cover;
  if (opt.equality) {
    auto g = symbolic_image(m.spec, m.grid, m.quad);
    cover = steering_cover(m.spec, m.grid, m.quad, g, k);
    out.coverTotal = cover->total();
  }
  for (int tau : opt.tauList) {
    std::vector<PartitionRun> qRuns, kRuns;
    for (int co : opt.coarsenessList) {
      auto pq = build_invariant_partition(m.grid, eta, tau, co, m.spec, m.quad, qDomain, opt.entropy.rule,
                                          opt.entropy.threshold);
      if (pq) {
        auto rq = run_partition(*pq, eta, rho, m.spec, m.grid, m.quad, m.ulam, opt.entropy);
        rq.coarseness = co;
        auto pk = restrict_to_k(*pq, k, m.spec, m.grid, m.quad);
        auto rk = run_partition(pk, eta, rho, m.spec, m.grid, m.quad, m.ulam, opt.entropy);
        rk.coarseness = co;
        const auto& hq = incremental ? rq.incremental : rq.metric;
        const auto& hk = incremental ? rk.incremental : rk.metric;
        const std::size_t n = std::min(hq.rate.size(), hk.rate.size());
        for (std::size_t j = 1; j <= n; ++j) {
          double slack = incremental ? opt.guard : 3.0 / (std::exp(1.0) * j * tau) + opt.guard;
          double excess = hk.rate[j - 1] - hq.rate[j - 1] - slack;
          out.worstExcess = std::max(out.worstExcess, excess);
          if (excess > 0.0)
            out.failures.push_back("tau=" + std::to_string(tau) + " coarseness=" + std::to_string(co) +
                                   " n=" + std::to_string(j));
        }
        qRuns.push_back(std::move(rq));
        kRuns.push_back(std::move(rk));
      }
      auto pk = build_invariant_partition(m.grid, eta, tau, co, m.spec, m.quad, k, opt.entropy.rule,
                                          opt.entropy.threshold);
      if (pk) {
        auto rk = run_partition(*pk, eta, rho, m.spec, m.grid, m.quad, m.ulam, opt.entropy);
        rk.coarseness = co;
        if (cover && cover->total() && tau >= cover->max_time()) {
          auto pe = extend_from_k(*pk, *cover, m.spec, m.grid, m.quad, qDomain, eta, opt.entropy.threshold);
          if (validate_partition(pe, m.spec, m.grid, m.quad).empty()) {
            auto re = run_partition(pe, eta, rho, m.spec, m.grid, m.quad, m.ulam, opt.entropy);
            re.coarseness = co;
            qRuns.push_back(std::move(re));
          }
        }
        kRuns.push_back(std::move(rk));
      }
    }
    out.q.entries.push_back(summarize_runs(tau, std::move(qRuns), opt.entropy.topological));
    out.k.entries.push_back(summarize_runs(tau, std::move(kRuns), opt.entropy.topological));
  }
  finish_bound(out.q);
  finish_bound(out.k);
  return out;
}

namespace detail {
inline double pick(const UpperBoundEntry& e, bool incremental) { return incremental ? e.hIncremental : e.hMetric; }

inline std::optional<TheoremReport> invariance_gate(const std::string& id, const Model& m, const CellSet& k) {
  if (k.empty()) return skipped_report(id, "K is empty");
  auto inv = invariant_in_q(m.spec, m.grid, m.quad, k);
  if (inv.holds) return std::nullopt;
  const auto& v = inv.violations.front();
  auto r = skipped_report(id, "K is not invariant in Q");
  r.notes.push_back("witness cell=" + std::to_string(v.cell) + " node=" + m.quad.label(v.node) +
                    " image=" + std::to_string(v.imageCell));
  r.add("witness_cell", v.cell);
  r.add("witness_node", v.node);
  return r;
}
}  // namespace detail

inline TheoremReport k_vs_q_report(const std::string& id, const Model& m, const CellSet& k, const KvsQOptions& opt,
                                   bool incremental) {
  if (auto gate = detail::invariance_gate(id, m, k)) return *gate;
  auto runs = k_vs_q_runs(m, k, opt, incremental);
  TheoremReport r;
  r.id = id;
  r.tolerance = opt.equalityTol;
  r.assumed.push_back(nonsingular_assumption());
  const auto& eq = runs.q.entries.back();
  const auto& ek = runs.k.entries.back();
  const double hq = detail::pick(eq, incremental), hk = detail::pick(ek, incremental);
  r.add("tau", eq.tau);
  r.add("h_Q", hq);
  r.add("h_K", hk);
  r.add("worst_per_partition_excess", runs.worstExcess);
  r.add("cover_total", runs.coverTotal ? 1.0 : 0.0);
  bool ok = runs.failures.empty();
  for (const auto& f : runs.failures) r.notes.push_back("restriction inequality violated at " + f);
  if (!incremental && opt.equality) {
    if (!runs.coverTotal) {
      r.notes.push_back("equality branch skipped: steering cover is partial");
    } else {
      r.add("abs_difference", std::abs(hq - hk));
      ok = ok && std::abs(hq - hk) <= opt.equalityTol;
    }
  }
  r.verdict = ok ? Verdict::pass : Verdict::fail;
  if (!ok) r.reason = "inequality or equality outside tolerance";
  return r;
}

inline TheoremReport check_k_vs_q(const Model& m, const CellSet& k, const KvsQOptions& opt = {}) {
  return k_vs_q_report("k_vs_q", m, k, opt, false);
}

inline TheoremReport check_incremental_k_vs_q(const Model& m, const CellSet& k, const KvsQOptions& opt = {}) {
  KvsQOptions o = opt;
  o.equality = false;
  return k_vs_q_report("incremental_k_vs_q", m, k, o, true);
}

// Component-wise checks with eta restricted to each Q_i and the same rho.
inline TheoremReport check_disjoint_union(const Model& m, const std::vector<CellSet>& components, int tau,
                                          int coarseness, int nMax, double guard = 1e-12) {
  const std::string id = "disjoint_union";
  const auto& eta = m.qsm.eta;
  const double rho = m.qsm.rho;
  for (std::size_t a = 0; a < components.size(); ++a)
    for (std::size_t b = a + 1; b < components.size(); ++b)
      if (!set_intersection(components[a], components[b]).empty())
        return skipped_report(id, "components overlap");
  std::vector<double> weight;
  for (const auto& c : components) {
    if (!invariant_in_q(m.spec, m.grid, m.quad, c).holds) return skipped_report(id, "a component is not invariant in Q");
    double w = 0.0;
    for (int cell : c) w += eta[cell];
    if (!(w > 0.0)) return skipped_report(id, "a component has zero eta mass");
    weight.push_back(w);
  }
  TheoremReport r;
  r.id = id;
  r.tolerance = guard;
  r.assumed.push_back(nonsingular_assumption());
  bool ok = true;
  // Conditional measures solve the QSM equation on their component with the same rho.
  for (std::size_t i = 0; i < components.size(); ++i) {
    auto mask = to_mask(components[i], m.grid.cellCount);
    std::vector<double> ei(m.grid.cellCount, 0.0);
    for (int cell : components[i]) ei[cell] = eta[cell] / weight[i];
    auto y = m.ulam.P.left_multiply(ei);
    double res = 0.0;
    for (int cell = 0; cell < m.grid.cellCount; ++cell)
      if (mask[cell]) res = std::max(res, std::abs(rho * ei[cell] - y[cell]));
    r.add("qsm_residual_" + std::to_string(i), res);
    r.add("eta_mass_" + std::to_string(i), weight[i]);
    ok = ok && res < 1e-9;
  }
  auto base = build_invariant_partition(m.grid, eta, tau, coarseness, m.spec, m.quad);
  if (!base) return skipped_report(id, "no invariant partition of Q");
  InvariantPartition refined = *base;
  refined.elements.clear();
  refined.feedback.clear();
  for (int e = 0; e < base->size(); ++e)
    for (const auto& c : components) {
      auto piece = set_intersection(base->elements[e], c);
      if (piece.empty()) continue;
      refined.elements.push_back(piece);
      refined.feedback.push_back(base->feedback[e]);
    }
  EntropyOptions eo;
  eo.nMax = nMax;
  eo.topological = false;
  auto rq = run_partition(refined, eta, rho, m.spec, m.grid, m.quad, m.ulam, eo);
  std::vector<EntropyReport> parts, cond;
  std::vector<WordTree> trees;
  for (std::size_t i = 0; i < components.size(); ++i) {
    auto pi = restrict_to_k(refined, components[i], m.spec, m.grid, m.quad);
    auto ri = run_partition(pi, eta, rho, m.spec, m.grid, m.quad, m.ulam, eo);
    parts.push_back(ri.metric);
    std::vector<double> ei(m.grid.cellCount, 0.0);
    for (int cell : components[i]) ei[cell] = eta[cell] / weight[i];
    auto ti = word_masses(pi, ri.acs, ei, rho, m.ulam, m.quad, {nMax});
    cond.push_back(metric_entropy(ti));
    trees.push_back(std::move(ti));
  }
  const auto& hq = rq.metric;
  double worstLeft = -std::numeric_limits<double>::infinity(), worstRight = worstLeft;
  double worstCondLeft = worstLeft, worstCondRight = worstLeft;
  for (std::size_t n = 1; n <= hq.H.size(); ++n) {
    double mx = 0.0, sum = 0.0, cmx = 0.0, csum = 0.0, slack = 0.0;
    for (std::size_t i = 0; i < components.size(); ++i) {
      double h = n <= parts[i].H.size() ? parts[i].H[n - 1] : 0.0;
      mx = std::max(mx, h);
      sum += h;
      double hc = n <= cond[i].rate.size() ? weight[i] * cond[i].rate[n - 1] : 0.0;
      cmx = std::max(cmx, hc);
      csum += hc;
      if (n <= trees[i].levels.size()) {
        double s = 0.0;
        for (const auto& node : trees[i].levels[n - 1]) s += node.mass;
        s *= trees[i].scale(static_cast<int>(n));
        slack += -weight[i] * std::log(weight[i]) * s / (static_cast<double>(n) * tau);
      }
    }
    const double h = hq.H[n - 1], rate = hq.rate[n - 1];
    worstLeft = std::max(worstLeft, mx - h);
    worstRight = std::max(worstRight, h - sum);
    worstCondLeft = std::max(worstCondLeft, cmx - rate);
    worstCondRight = std::max(worstCondRight, rate - csum - slack);
  }
  r.add("worst_left_excess", worstLeft);
  r.add("worst_right_excess", worstRight);
  r.add("worst_conditional_left_excess", worstCondLeft);
  r.add("worst_conditional_right_excess", worstCondRight);
  r.add("h_Q", hq.estimate);
  ok = ok && worstLeft <= guard && worstRight <= guard && worstCondLeft <= guard && worstCondRight <= guard;
  r.verdict = ok ? Verdict::pass : Verdict::fail;
  if (!ok) r.reason = "a disjoint-union inequality fails";
  return r;
}

inline TheoremReport check_comparison(const Model& m, int tau, int coarseness, int nMax) {
  TheoremReport r;
  r.id = "comparison";
  auto part = build_invariant_partition(m.grid, m.qsm.eta, tau, coarseness, m.spec, m.quad);
  if (!part) return skipped_report(r.id, "no invariant partition");
  EntropyOptions eo;
  eo.nMax = nMax;
  auto run = run_partition(*part, m.qsm.eta, m.qsm.rho, m.spec, m.grid, m.quad, m.ulam, eo);
  auto rows = comparison_rows(run.metric, run.tree, run.topo);
  bool ok = true, okResidual = true;
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& row : rows) {
    ok = ok && row.holds;
    okResidual = okResidual && row.residualHolds;
    worst = std::max(worst, row.H - row.logCount);
    if (!row.holds) r.notes.push_back("H_n > log #W_n at n=" + std::to_string(row.n));
  }
  r.add("worst_H_minus_logW", worst);
  r.add("h_metric", run.metric.estimate);
  r.add("h_topological", run.topo.hTop);
  r.add("residual_form_holds", okResidual ? 1.0 : 0.0);
  r.verdict = ok ? Verdict::pass : Verdict::fail;
  if (!ok) r.reason = "H_n exceeds log #W_n for a sub-probability mass distribution";
  return r;
}

inline TheoremReport check_support(const Model& m, const ControlSetAnalysis& sets, double threshold = 1e-12) {
  TheoremReport r;
  r.id = "support";
  r.tolerance = threshold;
  auto supp = m.qsm.support(threshold);
  int tested = 0, worstMissing = 0;
  bool ok = true;
  for (const auto& d : sets.sets) {
    if (d.transitivityCells.empty() || set_intersection(d.cells, supp).empty()) continue;
    ++tested;
    auto missing = set_difference(d.cells, supp);
    worstMissing = std::max(worstMissing, static_cast<int>(missing.size()));
    if (missing.size() > 1) ok = false;
  }
  if (tested == 0) return skipped_report(r.id, "no control set with transitivity cells meets supp eta");
  r.add("control_sets_tested", tested);
  r.add("max_missing_cells", worstMissing);
  r.verdict = ok ? Verdict::pass : Verdict::fail;
  if (!ok) r.reason = "a control set has more than one cell without eta mass";
  return r;
}

/** \brief Intermediate results of the invariant-control-set pipeline. */
struct InvariantSetsResult {
  TheoremReport report;
  ControlSetAnalysis sets;
  std::vector<int> invariantSets;
  CellSet k;
  std::vector<CellSet> closures;
  std::optional<KvsQRuns> runs;
  std::vector<double> hClosure;
};

inline InvariantSetsResult invariant_sets_pipeline(const Model& m, const CellSet& w, const KvsQOptions& opt) {
  InvariantSetsResult out;
  auto& r = out.report;
  r.id = "invariant_sets";
  r.tolerance = opt.equalityTol;
  r.assumed.push_back(nonsingular_assumption());
  auto skip = [&](const std::string& why) {
    r.verdict = Verdict::skipped;
    r.reason = why;
    return out;
  };
  auto g = symbolic_image(m.spec, m.grid, m.quad, w);
  out.sets = find_w_control_sets(m.grid, g);
  for (int i = 0; i < static_cast<int>(out.sets.sets.size()); ++i)
    if (out.sets.sets[i].invariant) out.invariantSets.push_back(i);
  r.add("control_sets", static_cast<double>(out.sets.sets.size()));
  r.add("invariant_control_sets", static_cast<double>(out.invariantSets.size()));
  if (out.invariantSets.empty()) return skip("no invariant W-control set");
  for (int i : out.invariantSets) {
    if (out.sets.sets[i].transitivityCells.empty()) return skip("an invariant control set has no transitivity cells");
    out.closures.push_back(grid_closure(m.grid, g, out.sets.sets[i].cells));
  }
  for (std::size_t a = 0; a < out.closures.size(); ++a)
    for (std::size_t b = a + 1; b < out.closures.size(); ++b)
      if (!set_intersection(out.closures[a], out.closures[b]).empty()) return skip("closures of invariant control sets meet");
  for (const auto& c : out.closures) out.k = set_union(out.k, c);
  auto inv = invariant_in_q(m.spec, m.grid, m.quad, out.k);
  if (!inv.holds) return skip("K is not invariant in Q");
  if (!m.grid.full_circle()) {
    CellSet boundary{0, m.grid.cellCount - 1};
    auto outsideK = set_difference(boundary, out.k);
    auto kMask = to_mask(outsideK, m.grid.cellCount);
    for (int c : out.k)
      for (int node = 0; node < m.quad.size(); ++node)
        for (double x : m.grid.samples(c)) {
          int j = m.grid.cell_of(eval_map(m.spec, x, m.quad.nodes[node]));
          if (j >= 0 && kMask[j]) return skip("images of K meet the boundary of Q outside K");
        }
  }
  auto gq = symbolic_image(m.spec, m.grid, m.quad);
  if (!steering_cover(m.spec, m.grid, m.quad, gq, out.k).total()) return skip("steering cover into K is partial");
  out.runs = k_vs_q_runs(m, out.k, opt, false);
  const double hq = out.runs->q.entries.back().hMetric;
  const double hk = out.runs->k.entries.back().hMetric;
  double mx = 0.0, sum = 0.0;
  for (const auto& c : out.closures) {
    if (c == out.k) {
      out.hClosure.push_back(hk);
      mx = std::max(mx, hk);
      sum += hk;
      continue;
    }
    KvsQOptions o = opt;
    o.equality = false;
    auto rc = k_vs_q_runs(m, c, o, false);
    double h = rc.k.entries.back().hMetric;
    out.hClosure.push_back(h);
    mx = std::max(mx, h);
    sum += h;
  }
  r.add("h_Q", hq);
  r.add("h_K", hk);
  r.add("max_h_closure", mx);
  r.add("sum_h_closure", sum);
  r.add("k_cells", static_cast<double>(out.k.size()));
  const double tol = opt.equalityTol;
  bool ok = std::abs(hq - hk) <= tol && mx <= hk + tol && hk <= sum + tol;
  r.verdict = ok ? Verdict::pass : Verdict::fail;
  if (!ok) r.reason = "entropy of Q, K and the closures disagree beyond tolerance";
  return out;
}

inline TheoremReport check_invariant_sets(const Model& m, const CellSet& w, const KvsQOptions& opt = {}) {
  return invariant_sets_pipeline(m, w, opt).report;
}

}  // namespace qsmlab
