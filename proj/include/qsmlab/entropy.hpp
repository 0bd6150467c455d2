#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include "controlsets.hpp"
#include "discretization.hpp"
#include "partitions.hpp"
#include "qsm.hpp"

namespace qsmlab {

inline double phi(double x) { return x > 0.0 ? x * std::log(x) : 0.0; }

inline double word_weight(const ControlQuadrature& quad, const std::vector<int>& w) {
  double p = 1.0;
  for (int k : w) p *= quad.weights[k];
  return p;
}

/** \brief Per element, the node words of length tau keeping every sample in the domain. */
struct AdmissibleControlSet {
  int tau = 1;
  std::vector<std::vector<std::vector<int>>> words;
  std::vector<double> mass;
};

inline AdmissibleControlSet admissible_control_sets(const InvariantPartition& c, const SystemSpec& spec,
                                                    const CellGrid& grid, const ControlQuadrature& quad,
                                                    double budget = 1e6) {
  if (std::pow(static_cast<double>(quad.size()), c.tau) > budget)
    throw std::length_error("m^tau exceeds the word budget; use fewer quadrature nodes or a smaller tau");
  AdmissibleControlSet acs;
  acs.tau = c.tau;
  acs.words.resize(c.size());
  acs.mass.assign(c.size(), 0.0);
  auto mask = to_mask(c.domain, grid.cellCount);
  parallel_for(c.size(), [&](int i) {
    auto pts = detail::gather_samples(grid, c.elements[i]);
    detail::feasible_words(spec, grid, quad, mask, pts, c.tau, [&](const std::vector<int>& w, double) {
      acs.words[i].push_back(w);
      return true;
    });
    double m = 0.0;
    for (const auto& w : acs.words[i]) m += word_weight(quad, w);
    acs.mass[i] = m;
  });
  return acs;
}

using SparseVector = std::vector<std::pair<int, double>>;

namespace detail {
inline SparseVector times(const SparseVector& x, const SparseMatrix& m, const std::vector<char>& mask,
                          std::vector<double>& scratch, std::vector<int>& touched) {
  for (auto [i, v] : x)
    for (int p = m.rowPtr[i]; p < m.rowPtr[i + 1]; ++p) {
      int j = m.colIdx[p];
      if (!mask[j]) continue;
      if (scratch[j] == 0.0) touched.push_back(j);
      scratch[j] += v * m.values[p];
    }
  std::sort(touched.begin(), touched.end());
  touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
  SparseVector y;
  for (int j : touched) {
    if (scratch[j] != 0.0) y.push_back({j, scratch[j]});
    scratch[j] = 0.0;
  }
  touched.clear();
  return y;
}
}  // namespace detail

// Rows c in P of T_P = sum over V_P of nu(w) U_w, restricted to the domain.
inline std::vector<SparseMatrix> element_operators(const InvariantPartition& c, const AdmissibleControlSet& acs,
                                                   const UlamOperator& ulam, const ControlQuadrature& quad) {
  const int n = ulam.size();
  auto mask = to_mask(c.domain, n);
  std::vector<SparseMatrix> ops(c.size());
  parallel_for(c.size(), [&](int e) {
    std::vector<std::vector<std::pair<int, double>>> rows(n);
    std::vector<double> scratch(n, 0.0);
    std::vector<int> touched;
    // Trie over V_P: shared prefixes are propagated once.
    std::vector<std::vector<int>> words = acs.words[e];
    std::sort(words.begin(), words.end());
    for (int cell : c.elements[e]) {
      std::map<int, double> acc;
      std::vector<SparseVector> stack{SparseVector{{cell, 1.0}}};
      std::vector<int> prefix;
      for (const auto& w : words) {
        std::size_t common = 0;
        while (common < prefix.size() && prefix[common] == w[common]) ++common;
        prefix.resize(common);
        stack.resize(common + 1);
        for (std::size_t d = common; d < w.size(); ++d) {
          auto y = detail::times(stack.back(), ulam.byNode[w[d]], mask, scratch, touched);
          for (auto& [j, v] : y) v *= quad.weights[w[d]];
          stack.push_back(std::move(y));
          prefix.push_back(w[d]);
        }
        for (auto [j, v] : stack.back()) acc[j] += v;
      }
      for (auto [j, v] : acc)
        if (v != 0.0) rows[cell].push_back({j, v});
    }
    ops[e] = SparseMatrix::from_rows(n, rows);
  });
  return ops;
}

/** \brief Admissible words by depth with cylinder masses. */
struct WordTree {
  struct Node {
    int parent = -1;  // index in the previous level
    int symbol = 0;   // partition element
    double mass = 0.0;
  };
  int tau = 1;
  double rho = 1.0;
  int elementCount = 0;
  std::vector<std::vector<Node>> levels;  // levels[d-1] holds depth d
  std::vector<double> residual;           // rho^{(n-1)tau} - sum of depth-n masses
  bool truncated = false;
  int requestedDepth = 0;
  std::size_t nodeCount = 0;

  int depth() const { return static_cast<int>(levels.size()); }

  std::vector<int> word(int d, int idx) const {
    std::vector<int> w(d);
    for (int k = d; k >= 1; --k) {
      const auto& node = levels[k - 1][idx];
      w[k - 1] = node.symbol;
      idx = node.parent;
    }
    return w;
  }

  double scale(int d) const { return std::pow(rho, -static_cast<double>((d - 1) * tau)); }
};

struct WordTreeOptions {
  int nMax = 8;
  std::size_t nodeBudget = 200000;
  double threshold = 1e-12;  // eta-null cells
};

inline WordTree word_masses(const InvariantPartition& c, const AdmissibleControlSet& acs,
                            const std::vector<double>& eta, double rho, const UlamOperator& ulam,
                            const ControlQuadrature& quad, const WordTreeOptions& opt = {}) {
  const int n = ulam.size();
  WordTree t;
  t.tau = c.tau;
  t.rho = rho;
  t.elementCount = c.size();
  t.requestedDepth = opt.nMax;
  auto ops = element_operators(c, acs, ulam, quad);
  auto lookup = c.element_lookup(n);
  auto domainMask = to_mask(c.domain, n);

  std::vector<SparseVector> current;
  std::vector<WordTree::Node> level;
  for (int e = 0; e < c.size(); ++e) {
    SparseVector x;
    for (int cell : c.elements[e])
      if (eta[cell] > 0.0) x.push_back({cell, eta[cell]});
    double s = 0.0;
    for (auto [j, v] : x) s += v;
    double m = s * acs.mass[e];
    if (m > 0.0) {
      level.push_back({-1, e, m});
      current.push_back(std::move(x));
    }
  }
  auto finish_level = [&](std::vector<WordTree::Node>&& lv) {
    double s = 0.0;
    for (const auto& node : lv) s += node.mass;
    t.residual.push_back(std::pow(rho, static_cast<double>(t.depth() * t.tau)) - s);
    t.nodeCount += lv.size();
    t.levels.push_back(std::move(lv));
  };
  if (level.empty()) return t;
  if (level.size() > opt.nodeBudget) {
    t.truncated = true;
    return t;
  }
  finish_level(std::move(level));

  while (t.depth() < opt.nMax) {
    const auto& parents = t.levels.back();
    std::vector<std::vector<std::pair<WordTree::Node, SparseVector>>> kids(parents.size());
    std::atomic<std::size_t> produced{0};
    std::atomic<bool> over{false};
    const std::size_t room = opt.nodeBudget - t.nodeCount;
    parallel_for(static_cast<int>(parents.size()), [&](int p) {
      if (over.load()) return;
      std::vector<double> scratch(n, 0.0);
      std::vector<int> touched;
      auto y = detail::times(current[p], ops[parents[p].symbol], domainMask, scratch, touched);
      std::map<int, SparseVector> split;
      for (auto [j, v] : y)
        if (lookup[j] >= 0 && eta[j] > opt.threshold) split[lookup[j]].push_back({j, v});
      for (auto& [e, x] : split) {
        double s = 0.0;
        for (auto [j, v] : x) s += v;
        double m = s * acs.mass[e];
        if (!(m > 0.0)) continue;
        kids[p].push_back({WordTree::Node{p, e, m}, std::move(x)});
        if (++produced > room) over = true;
      }
    });
    if (over.load()) {
      t.truncated = true;
      break;
    }
    std::vector<WordTree::Node> next;
    std::vector<SparseVector> nextVec;
    for (auto& list : kids)
      for (auto& [node, x] : list) {
        next.push_back(node);
        nextVec.push_back(std::move(x));
      }
    if (next.empty()) break;
    current = std::move(nextVec);
    finish_level(std::move(next));
  }
  return t;
}

/** \brief Entropy values per depth and the tail-window estimate. */
struct EntropyReport {
  int tau = 1;
  std::vector<double> H;     // H[n-1]
  std::vector<double> rate;  // H_n / (n tau)
  double estimate = 0.0;     // max over the tail window
  double windowMin = 0.0;
  bool truncated = false;
  bool infeasible = false;
};

inline void finish_window(EntropyReport& r) {
  if (r.infeasible || r.rate.empty()) {
    r.estimate = r.windowMin = r.infeasible ? std::numeric_limits<double>::infinity() : 0.0;
    return;
  }
  const int n = static_cast<int>(r.rate.size());
  const int lo = (n + 1) / 2;
  r.estimate = -std::numeric_limits<double>::infinity();
  r.windowMin = std::numeric_limits<double>::infinity();
  for (int k = std::max(lo, 1); k <= n; ++k) {
    r.estimate = std::max(r.estimate, r.rate[k - 1]);
    r.windowMin = std::min(r.windowMin, r.rate[k - 1]);
  }
}

inline EntropyReport infeasible_report(int tau) {
  EntropyReport r;
  r.tau = tau;
  r.infeasible = true;
  finish_window(r);
  return r;
}

inline EntropyReport metric_entropy(const WordTree& t) {
  EntropyReport r;
  r.tau = t.tau;
  r.truncated = t.truncated;
  for (int d = 1; d <= t.depth(); ++d) {
    const double sc = t.scale(d);
    double h = 0.0;
    for (const auto& node : t.levels[d - 1]) h -= phi(sc * node.mass);
    r.H.push_back(h);
    r.rate.push_back(h / (d * t.tau));
  }
  finish_window(r);
  return r;
}

namespace detail {
// Sums of child masses per parent at depth d (parents at depth d, children at d+1).
inline std::vector<double> child_sums(const WordTree& t, int d) {
  std::vector<double> s(t.levels[d - 1].size(), 0.0);
  for (const auto& node : t.levels[d]) s[node.parent] += node.mass;
  return s;
}
}  // namespace detail

// Conditional term j for j = 0..depth-1; j = 0 conditions on the trivial partition.
inline std::vector<double> incremental_terms(const WordTree& t) {
  std::vector<double> terms;
  if (t.depth() == 0) return terms;
  {
    double total = 0.0;
    for (const auto& node : t.levels[0]) total += node.mass;
    double sum = 0.0;
    for (const auto& node : t.levels[0]) sum += phi(node.mass / total);
    terms.push_back(-total * sum);
  }
  for (int j = 1; j < t.depth(); ++j) {
    const double sc = std::pow(t.rho, -static_cast<double>(j * t.tau));
    auto cs = detail::child_sums(t, j);
    std::vector<double> inner(cs.size(), 0.0);
    for (const auto& node : t.levels[j]) inner[node.parent] += phi(node.mass / cs[node.parent]);
    double term = 0.0;
    for (std::size_t p = 0; p < cs.size(); ++p)
      if (cs[p] > 0.0) term -= sc * cs[p] * inner[p];
    terms.push_back(term);
  }
  return terms;
}

inline EntropyReport incremental_entropy(const WordTree& t) {
  EntropyReport r;
  r.tau = t.tau;
  r.truncated = t.truncated;
  double acc = 0.0;
  auto terms = incremental_terms(t);
  for (std::size_t n = 1; n <= terms.size(); ++n) {
    acc += terms[n - 1];
    r.H.push_back(acc);
    r.rate.push_back(acc / (static_cast<double>(n) * t.tau));
  }
  finish_window(r);
  return r;
}

struct KeCheck {
  int n = 0;
  double induced = 0.0;  // entropy of the induced partition, weight rho^{-n tau}
  double coarse = 0.0;   // entropy of depth-n words, weight rho^{-n tau}
  int bigCount = 0;
  bool holds = true;
};

inline std::vector<KeCheck> ke_checks(const WordTree& t, double guard = 1e-12) {
  std::vector<KeCheck> out;
  for (int n = 1; n < t.depth(); ++n) {
    const double sc = std::pow(t.rho, -static_cast<double>(n * t.tau));
    KeCheck k;
    k.n = n;
    for (double s : detail::child_sums(t, n)) k.induced -= phi(sc * s);
    for (const auto& node : t.levels[n - 1]) {
      k.coarse -= phi(sc * node.mass);
      if (sc * node.mass > 1.0 / std::exp(1.0)) ++k.bigCount;
    }
    k.holds = k.induced <= k.coarse + k.bigCount / std::exp(1.0) + guard;
    out.push_back(k);
  }
  return out;
}

struct BudgetCheck {
  int n = 0;
  double scaledSum = 0.0;
  double nestingExcess = 0.0;  // depth-n sum minus rho^tau times the depth-(n-1) sum
  bool holds = true;
};

inline std::vector<BudgetCheck> budget_checks(const WordTree& t, double slack = 1e-9) {
  std::vector<BudgetCheck> out;
  double prev = 0.0;
  for (int d = 1; d <= t.depth(); ++d) {
    double s = 0.0;
    for (const auto& node : t.levels[d - 1]) s += node.mass;
    BudgetCheck b;
    b.n = d;
    b.scaledSum = t.scale(d) * s;
    b.nestingExcess = d == 1 ? 0.0 : s - std::pow(t.rho, t.tau) * prev;
    b.holds = b.scaledSum <= 1.0 + slack && b.nestingExcess <= slack;
    out.push_back(b);
    prev = s;
  }
  return out;
}

/** \brief Counts of topologically admissible element words. */
struct TopologicalCount {
  int tau = 1;
  std::vector<double> counts;       // #W_n over any admissible word
  std::vector<double> fixedCounts;  // #W_n with the feedback word only
  double hTop = 0.0;
  double hTopFixed = 0.0;
  bool truncated = false;
};

namespace detail {
// Cell-level tau-step reachability using the given word lists per element.
inline std::vector<std::vector<int>> cell_relation(const InvariantPartition& c,
                                                   const std::vector<std::vector<std::vector<int>>>& words,
                                                   const SystemSpec& spec, const CellGrid& grid,
                                                   const ControlQuadrature& quad) {
  const int n = grid.cellCount;
  auto mask = to_mask(c.domain, n);
  // One-step sample images per node.
  std::vector<std::vector<std::vector<int>>> step(quad.size(), std::vector<std::vector<int>>(n));
  parallel_for(n, [&](int i) {
    if (!mask[i]) return;
    for (int k = 0; k < quad.size(); ++k) {
      std::vector<int> img;
      for (double x : grid.samples(i)) {
        int j = grid.cell_of(eval_map(spec, x, quad.nodes[k]));
        if (j >= 0 && mask[j]) img.push_back(j);
      }
      std::sort(img.begin(), img.end());
      img.erase(std::unique(img.begin(), img.end()), img.end());
      step[k][i] = img;
    }
  });
  std::vector<std::vector<int>> rel(n);
  for (int e = 0; e < c.size(); ++e)
    for (int cell : c.elements[e]) {
      std::vector<char> hit(n, 0);
      for (const auto& w : words[e]) {
        std::vector<int> cur{cell};
        for (int k : w) {
          std::vector<char> seen(n, 0);
          std::vector<int> next;
          for (int a : cur)
            for (int b : step[k][a])
              if (!seen[b]) {
                seen[b] = 1;
                next.push_back(b);
              }
          cur = std::move(next);
        }
        for (int b : cur) hit[b] = 1;
      }
      for (int b = 0; b < n; ++b)
        if (hit[b]) rel[cell].push_back(b);
    }
  return rel;
}

inline std::vector<double> count_words(const InvariantPartition& c, const std::vector<std::vector<int>>& rel,
                                       int cellCount, int nMax, std::size_t budget, bool& truncated) {
  auto lookup = c.element_lookup(cellCount);
  std::vector<double> counts;
  std::vector<std::vector<int>> level;  // reachable cells per word
  for (const auto& e : c.elements) level.push_back(e);
  counts.push_back(static_cast<double>(level.size()));
  std::size_t total = level.size();
  for (int d = 2; d <= nMax; ++d) {
    std::vector<std::vector<int>> next;
    for (const auto& cells : level) {
      std::map<int, std::vector<int>> split;
      std::vector<char> seen(cellCount, 0);
      for (int a : cells)
        for (int b : rel[a])
          if (!seen[b] && lookup[b] >= 0) {
            seen[b] = 1;
            split[lookup[b]].push_back(b);
          }
      for (auto& [e, v] : split) next.push_back(std::move(v));
      if (total + next.size() > budget) {
        truncated = true;
        return counts;
      }
    }
    if (next.empty()) break;
    total += next.size();
    counts.push_back(static_cast<double>(next.size()));
    level = std::move(next);
  }
  return counts;
}

inline double min_rate(const std::vector<double>& counts, int tau) {
  double h = std::numeric_limits<double>::infinity();
  for (std::size_t n = 1; n <= counts.size(); ++n)
    h = std::min(h, std::log(counts[n - 1]) / (static_cast<double>(n) * tau));
  return counts.empty() ? 0.0 : h;
}
}  // namespace detail

inline TopologicalCount topological_count(const InvariantPartition& c, const AdmissibleControlSet& acs,
                                          const SystemSpec& spec, const CellGrid& grid,
                                          const ControlQuadrature& quad, int nMax,
                                          std::size_t budget = 200000) {
  TopologicalCount r;
  r.tau = c.tau;
  auto rel = detail::cell_relation(c, acs.words, spec, grid, quad);
  r.counts = detail::count_words(c, rel, grid.cellCount, nMax, budget, r.truncated);
  std::vector<std::vector<std::vector<int>>> fixed;
  for (const auto& f : c.feedback) fixed.push_back({f});
  auto relFixed = detail::cell_relation(c, fixed, spec, grid, quad);
  bool tf = false;
  r.fixedCounts = detail::count_words(c, relFixed, grid.cellCount, nMax, budget, tf);
  r.hTop = detail::min_rate(r.counts, c.tau);
  r.hTopFixed = detail::min_rate(r.fixedCounts, c.tau);
  return r;
}

struct ComparisonRow {
  int n = 0;
  double H = 0.0;
  double logCount = 0.0;
  double withResidual = 0.0;  // H_n - phi(scaled residual)
  bool holds = false;
  bool residualHolds = false;
};

// H_n <= log #W_n with a rounding guard of a few ulps; the residual form adds Z_n as one more set.
inline std::vector<ComparisonRow> comparison_rows(const EntropyReport& metric, const WordTree& t,
                                                  const TopologicalCount& top) {
  std::vector<ComparisonRow> rows;
  const double eps = std::numeric_limits<double>::epsilon();
  const std::size_t n = std::min(metric.H.size(), top.counts.size());
  for (std::size_t k = 1; k <= n; ++k) {
    ComparisonRow r;
    r.n = static_cast<int>(k);
    r.H = metric.H[k - 1];
    r.logCount = std::log(top.counts[k - 1]);
    const double guard = 4.0 * eps * std::max(1.0, r.logCount);
    r.holds = r.H <= r.logCount + guard;
    const double z = std::max(0.0, t.scale(static_cast<int>(k)) * t.residual[k - 1]);
    r.withResidual = r.H - phi(z);
    r.residualHolds = r.withResidual <= std::log(top.counts[k - 1] + 1.0) + guard;
    rows.push_back(r);
  }
  return rows;
}

struct PartitionRun {
  int tau = 1;
  int coarseness = 1;
  bool feasible = false;
  std::optional<InvariantPartition> partition;
  AdmissibleControlSet acs;
  WordTree tree;
  EntropyReport metric;
  EntropyReport incremental;
  TopologicalCount topo;
};

struct EntropyOptions {
  int nMax = 8;
  std::size_t nodeBudget = 200000;
  FeedbackRule rule = FeedbackRule::lexicographic;
  double threshold = 1e-12;
  bool topological = true;
};

inline PartitionRun run_partition(const InvariantPartition& c, const std::vector<double>& eta, double rho,
                                  const SystemSpec& spec, const CellGrid& grid, const ControlQuadrature& quad,
                                  const UlamOperator& ulam, const EntropyOptions& opt) {
  PartitionRun r;
  r.tau = c.tau;
  r.feasible = true;
  r.partition = c;
  r.acs = admissible_control_sets(c, spec, grid, quad);
  r.tree = word_masses(c, r.acs, eta, rho, ulam, quad, {opt.nMax, opt.nodeBudget, opt.threshold});
  r.metric = metric_entropy(r.tree);
  r.incremental = incremental_entropy(r.tree);
  if (opt.topological) r.topo = topological_count(c, r.acs, spec, grid, quad, opt.nMax, opt.nodeBudget);
  return r;
}

struct UpperBoundEntry {
  int tau = 1;
  double hMetric = std::numeric_limits<double>::infinity();
  double hIncremental = std::numeric_limits<double>::infinity();
  double hTopological = std::numeric_limits<double>::infinity();
  int bestCoarseness = -1;
  bool allTruncated = false;
  std::vector<PartitionRun> runs;
};

/** \brief Minimum over a family of partitions per tau: an upper bound on the metric entropy of the set. */
struct UpperBound {
  std::vector<UpperBoundEntry> entries;
  double value = std::numeric_limits<double>::infinity();  // at the largest tau
  std::string label = "upper bound on the metric invariance entropy";
};

inline UpperBoundEntry summarize_runs(int tau, std::vector<PartitionRun> runs, bool topo) {
  UpperBoundEntry e;
  e.tau = tau;
  e.runs = std::move(runs);
  bool anyComplete = false;
  for (const auto& r : e.runs)
    if (r.feasible && !r.metric.truncated) anyComplete = true;
  e.allTruncated = !anyComplete;
  for (const auto& r : e.runs) {
    if (!r.feasible || (anyComplete && r.metric.truncated)) continue;
    if (r.metric.estimate < e.hMetric) {
      e.hMetric = r.metric.estimate;
      e.bestCoarseness = r.coarseness;
    }
    e.hIncremental = std::min(e.hIncremental, r.incremental.estimate);
    if (topo) e.hTopological = std::min(e.hTopological, r.topo.hTop);
  }
  return e;
}

inline void finish_bound(UpperBound& ub) {
  if (ub.entries.empty()) return;
  auto it = std::max_element(ub.entries.begin(), ub.entries.end(),
                             [](const auto& a, const auto& b) { return a.tau < b.tau; });
  ub.value = it->hMetric;
}

inline UpperBound entropy_upper_bound(const CellGrid& grid, const std::vector<double>& eta, double rho,
                                      const SystemSpec& spec, const ControlQuadrature& quad,
                                      const UlamOperator& ulam, const std::vector<int>& tauList,
                                      const std::vector<int>& coarsenessList, const EntropyOptions& opt,
                                      const CellSet& domain = {}) {
  UpperBound ub;
  for (int tau : tauList) {
    UpperBoundEntry e;
    e.tau = tau;
    for (int co : coarsenessList) {
      auto part = build_invariant_partition(grid, eta, tau, co, spec, quad, domain, opt.rule, opt.threshold);
      if (!part) {
        PartitionRun r;
        r.tau = tau;
        r.coarseness = co;
        r.metric = infeasible_report(tau);
        r.incremental = infeasible_report(tau);
        e.runs.push_back(std::move(r));
        continue;
      }
      auto r = run_partition(*part, eta, rho, spec, grid, quad, ulam, opt);
      r.coarseness = co;
      e.runs.push_back(std::move(r));
    }
    ub.entries.push_back(summarize_runs(tau, std::move(e.runs), opt.topological));
  }
  finish_bound(ub);
  return ub;
}

/** \brief Memoryless coder-controller built from an invariant partition. */
struct CoderController {
  int tau = 1;
  std::vector<int> cellSymbol;                 // -1 outside the domain
  std::vector<std::vector<int>> controller;    // symbol -> node word
  CellSet domain;

  int code(int cell) const { return cell >= 0 ? cellSymbol[cell] : -1; }
};

inline CoderController coder_controller_from_partition(const InvariantPartition& c, const CellGrid& grid) {
  CoderController cc;
  cc.tau = c.tau;
  cc.controller = c.feedback;
  cc.domain = c.domain;
  auto lookup = c.element_lookup(grid.cellCount);
  cc.cellSymbol.assign(grid.cellCount, -1);
  for (int cell : c.domain) {
    if (lookup[cell] >= 0) {
      cc.cellSymbol[cell] = lookup[cell];
      continue;
    }
    int best = -1, bestDist = std::numeric_limits<int>::max();
    for (int other = 0; other < grid.cellCount; ++other) {
      if (lookup[other] < 0) continue;
      int d = std::abs(other - cell);
      if (grid.full_circle()) d = std::min(d, grid.cellCount - d);
      if (d < bestDist) {
        bestDist = d;
        best = lookup[other];
      }
    }
    cc.cellSymbol[cell] = best;
  }
  return cc;
}

// Symbol-stream entropy: lambda_k on depth-k symbol words, R = H_{lambda_k} / (k tau).
inline EntropyReport entropy_via_coder(const CoderController& cc, const WordTree& t) {
  EntropyReport r;
  r.tau = cc.tau;
  r.truncated = t.truncated;
  for (int k = 1; k <= t.depth(); ++k) {
    const double w = std::pow(t.rho, -static_cast<double>((k - 1) * cc.tau));
    std::vector<double> lambda;
    lambda.reserve(t.levels[k - 1].size());
    for (const auto& node : t.levels[k - 1]) lambda.push_back(w * node.mass);
    double h = 0.0;
    for (double l : lambda) h -= phi(l);
    r.H.push_back(h);
    r.rate.push_back(h / (k * cc.tau));
  }
  finish_window(r);
  return r;
}

struct LoopResult {
  double exitFraction = 0.0;
  int exits = 0;
  int trials = 0;
  std::vector<int> symbolLog;  // symbols of the first trial
};

inline LoopResult simulate_loop(const CoderController& cc, const SystemSpec& spec, const CellGrid& grid,
                                const ControlQuadrature& quad, const std::vector<double>& eta, int steps,
                                int trials, std::uint64_t seed) {
  if (trials < 1) throw std::invalid_argument("simulate_loop needs trials >= 1");
  std::mt19937_64 gen(seed);
  std::discrete_distribution<int> pickCell(eta.begin(), eta.end());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto mask = to_mask(cc.domain, grid.cellCount);
  LoopResult res;
  res.trials = trials;
  for (int t = 0; t < trials; ++t) {
    int cell = pickCell(gen);
    double x = grid.finite() ? grid.states[cell] : grid.cell_lo(cell) + unit(gen) * grid.width();
    if (grid.periodic && !grid.finite()) x = wrap01(x);
    bool exited = false;
    for (int s = 0; s < steps && !exited; ++s) {
      int sym = cc.code(grid.cell_of(x));
      if (sym < 0) {
        exited = true;
        break;
      }
      if (t == 0) res.symbolLog.push_back(sym);
      for (int node : cc.controller[sym]) {
        x = eval_map(spec, x, quad.nodes[node]);
        int j = grid.cell_of(x);
        if (j < 0 || !mask[j]) {
          exited = true;
          break;
        }
      }
    }
    if (exited) ++res.exits;
  }
  res.exitFraction = static_cast<double>(res.exits) / trials;
  return res;
}

}  // namespace qsmlab
