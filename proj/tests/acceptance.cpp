// One PASS/FAIL line per acceptance criterion; exit status 1 when any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "qsmlab/verify.hpp"

using namespace qsmlab;

namespace {

struct Line {
  int id;
  bool pass;
  std::string what;
  std::string detail;
};

std::vector<Line> lines;

void report(int id, bool pass, const std::string& what, const std::string& detail) {
  lines.push_back({id, pass, what, detail});
  std::printf("criterion %2d: %s  %s  [%s]\n", id, pass ? "PASS" : "FAIL", what.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct RunSet {
  std::string name;
  const Model* model;
  std::vector<PartitionRun> runs;
};

RunSet family(const std::string& name, const Model& m, std::vector<int> taus, std::vector<int> cos, int nMax) {
  EntropyOptions o;
  o.nMax = nMax;
  auto ub = entropy_upper_bound(m.grid, m.qsm.eta, m.qsm.rho, m.spec, m.quad, m.ulam, taus, cos, o);
  RunSet f{name, &m, {}};
  for (auto& e : ub.entries)
    for (auto& r : e.runs)
      if (r.feasible) f.runs.push_back(std::move(r));
  return f;
}

std::map<oracle::Word, double> tree_masses(const WordTree& t, int d) {
  std::map<oracle::Word, double> out;
  for (int i = 0; i < static_cast<int>(t.levels[d - 1].size()); ++i)
    if (t.levels[d - 1][i].mass > 0.0) out[t.word(d, i)] = t.levels[d - 1][i].mass;
  return out;
}

KvsQOptions options(std::vector<int> taus, std::vector<int> cos, int nMax) {
  KvsQOptions o;
  o.tauList = std::move(taus);
  o.coarsenessList = std::move(cos);
  o.entropy.nMax = nMax;
  return o;
}

}  // namespace

int main() {
  const auto start = std::chrono::steady_clock::now();
  const Model fin3 = fixtures::fin3();
  const Model basin = fixtures::two_basin();
  const Model ex1 = fixtures::example1();
  const Model ex2 = fixtures::example2();
  const Model stationary = fixtures::stationary();
  const std::vector<int> exTaus{1, 2, 3}, exCos{8, 64, 128, 512};

  std::vector<RunSet> fams;
  fams.push_back(family("fin3", fin3, {1, 2}, {1, 2}, 8));
  fams.push_back(family("two_basin", basin, {1, 2}, {1, 2, 4}, 8));
  fams.push_back(family("stationary", stationary, {1, 2}, {1, 2}, 8));
  fams.push_back(family("example1", ex1, exTaus, exCos, 8));

  // 1: QSM of the three-state system against the closed form.
  {
    auto [rho, eta] = oracle::perron2(0.5, 0.5, 0.5, 0.0);
    auto res = check_qsm(fin3.ulam.P, fin3.qsm, 5);
    double k = 0.0;
    for (double v : res.kStep) k = std::max(k, v);
    const double drho = std::abs(fin3.qsm.rho - fixtures::kRhoFin3);
    const double deta = std::max(std::abs(fin3.qsm.eta[0] - eta[0]), std::abs(fin3.qsm.eta[1] - eta[1]));
    report(1, drho <= 1e-9 && deta <= 1e-8 && k <= 1e-9 && std::abs(rho - fixtures::kRhoFin3) < 1e-15,
           "three-state QSM matches (1+sqrt5)/4 and its eigenvector",
           "drho=" + num(drho) + " deta=" + num(deta) + " kstep=" + num(k));
  }

  // 2: word masses and H_n against brute-force enumeration.
  {
    bool ok = true;
    double worst = 0.0;
    int compared = 0;
    for (const auto& r : fams[0].runs) {
      oracle::Partition op;
      op.tau = r.tau;
      for (const auto& e : r.partition->elements) {
        std::vector<int> st;
        for (int c : e) st.push_back(fin3.grid.states[c]);
        op.elements.push_back(st);
      }
      std::map<int, double> eta{{0, fin3.qsm.eta[0]}, {1, fin3.qsm.eta[1]}};
      for (int n = 1; n <= std::min(6, r.tree.depth()); ++n) {
        auto ref = oracle::cylinder_masses(fin3.spec.table, 2, op, eta, {0, 1}, n);
        auto got = tree_masses(r.tree, n);
        if (ref.size() != got.size()) ok = false;
        for (const auto& [w, v] : ref) worst = std::max(worst, std::abs(got[w] - v));
        worst = std::max(worst, std::abs(r.metric.H[n - 1] - oracle::entropy(ref, fin3.qsm.rho, r.tau, n)));
        ++compared;
      }
    }
    const auto& base = fams[0].runs.front();
    const double h2 = base.metric.H[1];
    ok = ok && worst <= 1e-10 && std::abs(h2 - 1.0245951229095034) <= 1e-9;
    report(2, ok, "word masses and H_n equal brute-force enumeration",
           "levels=" + std::to_string(compared) + " maxdiff=" + num(worst) + " H2=" + num(h2));
  }

  // 3: scaled mass budget and nesting.
  {
    bool ok = true;
    double worstSum = 0.0, worstNest = -1.0;
    int rows = 0;
    for (const auto& f : fams)
      for (const auto& r : f.runs)
        for (const auto& b : budget_checks(r.tree)) {
          ok = ok && b.holds;
          worstSum = std::max(worstSum, b.scaledSum);
          worstNest = std::max(worstNest, b.nestingExcess);
          ++rows;
        }
    report(3, ok, "scaled masses sum to at most 1 and nest across depths",
           "rows=" + std::to_string(rows) + " max_sum=" + num(worstSum) + " max_nesting_excess=" + num(worstNest));
  }

  // 4: H_n <= log #W_n.
  {
    int rows = 0, bad = 0, badResidual = 0;
    double worst = -1e300;
    std::string where;
    for (const auto& f : fams)
      for (const auto& r : f.runs)
        for (const auto& row : comparison_rows(r.metric, r.tree, r.topo)) {
          ++rows;
          if (!row.holds) {
            ++bad;
            if (where.empty())
              where = f.name + " tau=" + std::to_string(r.tau) + " co=" + std::to_string(r.coarseness) +
                      " n=" + std::to_string(row.n);
          }
          badResidual += !row.residualHolds;
          worst = std::max(worst, row.H - row.logCount);
        }
    report(4, bad == 0, "H_n <= log #W_n on every partition",
           "rows=" + std::to_string(rows) + " violations=" + std::to_string(bad) +
               (where.empty() ? "" : " first=" + where) + " worst=" + num(worst) +
               " residual_form_violations=" + std::to_string(badResidual));
  }

  // 5: shift conjugacy on Example 1.
  {
    auto r = check_conjugacy(ex1, 0.25, 3, 128, 8);
    report(5, r.passed(), "shift by 0.25 leaves rho and H_n unchanged",
           "drho=" + num(r.get("rho_difference")) + " dH=" + num(r.get("max_H_difference")));
  }

  // 6 and part of 9: Example 1 support, invariant set, K-vs-Q equality.
  InvariantSetsResult b1 = invariant_sets_pipeline(ex1, ex1.grid.all_cells(), options(exTaus, exCos, 8));
  {
    const double d = fixed_point(ex1.spec, -1.0, 0.2, 0.5);
    auto supp = ex1.qsm.support();
    const bool inside = !supp.empty() && ex1.grid.cell_lo(supp.front()) >= d - ex1.grid.width() &&
                        ex1.grid.cell_hi(supp.back()) <= 0.5 + 1e-12;
    const bool oneSet = b1.invariantSets.size() == 1;
    const bool kInv = !b1.k.empty() && invariant_in_q(ex1.spec, ex1.grid, ex1.quad, b1.k).holds;
    const double hq = b1.report.get("h_Q"), hk = b1.report.get("h_K");
    const bool eq = std::abs(hq - hk) <= 0.05;
    report(6, inside && oneSet && kInv && eq && b1.report.passed(),
           "Example 1: support in [d, 0.5], one invariant control set, h_Q = h_K at tau=3",
           "d=" + num(d) + " supp=[" + num(supp.empty() ? NAN : ex1.grid.cell_lo(supp.front())) + "," +
               num(supp.empty() ? NAN : ex1.grid.cell_hi(supp.back())) + "] sets=" +
               std::to_string(b1.sets.sets.size()) + " h_Q=" + num(hq) + " h_K=" + num(hk));
  }

  // 7: Example 2 control sets and the invariant-set pipeline.
  {
    auto b2 = invariant_sets_pipeline(ex2, ex2.grid.all_cells(), options(exTaus, exCos, 8));
    auto sets = b2.sets.sets;
    std::sort(sets.begin(), sets.end(), [](const auto& a, const auto& b) { return a.cells.front() < b.cells.front(); });
    const bool two = sets.size() == 2;
    const bool flags = two && !sets[0].invariant && sets[1].invariant && sets[0].exitWitness.has_value();
    std::string detail = "sets=" + std::to_string(sets.size());
    if (two)
      detail += " A=[" + num(ex2.grid.cell_lo(sets[0].cells.front())) + "," +
                num(ex2.grid.cell_hi(sets[0].cells.back())) + "] B=[" + num(ex2.grid.cell_lo(sets[1].cells.front())) +
                "," + num(ex2.grid.cell_hi(sets[1].cells.back())) + "]";
    detail += " verdict=" + std::string(verdict_name(b2.report.verdict)) + " h_Q=" + num(b2.report.get("h_Q")) +
              " h_K=" + num(b2.report.get("h_K"));
    report(7, two && flags && b2.report.passed(), "Example 2: one variant and one invariant set, pipeline passes",
           detail);
  }

  // 8: coder-controller reproduces the entropy and keeps the loop inside Q.
  {
    bool same = true;
    for (const auto& f : fams)
      for (const auto& r : f.runs) {
        auto cc = coder_controller_from_partition(*r.partition, f.model->grid);
        auto e = entropy_via_coder(cc, r.tree);
        same = same && e.H == r.metric.H && e.rate == r.metric.rate;
      }
    auto loopOf = [](const Model& m, int tau, int co) {
      auto p = build_invariant_partition(m.grid, m.qsm.eta, tau, co, m.spec, m.quad);
      auto cc = coder_controller_from_partition(*p, m.grid);
      return simulate_loop(cc, m.spec, m.grid, m.quad, m.qsm.eta, 50, 10000, 12345).exitFraction;
    };
    const double f3 = loopOf(fin3, 1, 1);
    double e1 = 0.0;
    for (int co : exCos) e1 = std::max(e1, loopOf(ex1, 3, co));
    report(8, same && f3 == 0.0 && e1 <= 0.01, "coder entropy bitwise equal; closed loop stays in Q",
           std::string("bitwise=") + (same ? "yes" : "no") + " exit_fin3=" + num(f3) + " exit_ex1_max=" + num(e1));
  }

  // 9: monotonicity in the set and the disjoint-union bounds.
  {
    auto a = check_k_vs_q(fin3, fin3.grid.all_cells(), options({1, 2}, {1, 2}, 8));
    auto c = check_k_vs_q(basin, {0, 1}, options({1, 2}, {1, 2, 4}, 8));
    auto u = check_disjoint_union(basin, {{0, 1}, {2, 3}}, 2, 1, 8);
    const bool ex1ok = b1.runs && b1.runs->failures.empty();
    report(9, a.passed() && c.passed() && u.passed() && ex1ok,
           "entropy of K at most entropy of Q; disjoint-union bounds",
           std::string("fin3=") + verdict_name(a.verdict) + " two_basin=" + verdict_name(c.verdict) +
               " union=" + verdict_name(u.verdict) + " example1_excess=" +
               num(b1.runs ? b1.runs->worstExcess : NAN));
  }

  // 10: finer partition bound H(induced) <= H(coarse) + K/e.
  {
    bool ok = true;
    int rows = 0;
    double worst = -1e300;
    for (const auto& f : fams)
      for (const auto& r : f.runs)
        for (const auto& k : ke_checks(r.tree)) {
          ok = ok && k.holds;
          worst = std::max(worst, k.induced - k.coarse - k.bigCount / std::exp(1.0));
          ++rows;
        }
    report(10, ok, "entropy of the induced partition within K/e of the coarse one",
           "rows=" + std::to_string(rows) + " worst_slack=" + num(worst));
  }

  int failed = 0;
  for (const auto& l : lines) failed += !l.pass;
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::printf("acceptance: %d/%zu passed in %.1f s\n", static_cast<int>(lines.size()) - failed, lines.size(), secs);
  return failed == 0 ? 0 : 1;
}
