#pragma once

#include <algorithm>
#include <deque>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "discretization.hpp"

namespace qsmlab {

inline bool contains(const CellSet& s, int c) { return std::binary_search(s.begin(), s.end(), c); }

inline CellSet set_union(const CellSet& a, const CellSet& b) {
  CellSet r;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(r));
  return r;
}

inline CellSet set_intersection(const CellSet& a, const CellSet& b) {
  CellSet r;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(r));
  return r;
}

inline CellSet set_difference(const CellSet& a, const CellSet& b) {
  CellSet r;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(r));
  return r;
}

inline std::vector<char> to_mask(const CellSet& s, int n) {
  std::vector<char> m(n, 0);
  for (int c : s) m[c] = 1;
  return m;
}

namespace detail {
template <class Next>
CellSet closure_walk(int n, const CellSet& start, Next&& next) {
  std::vector<char> seen(n, 0);
  std::deque<int> queue;
  for (int s : start)
    next(s, [&](int t) {
      if (!seen[t]) {
        seen[t] = 1;
        queue.push_back(t);
      }
    });
  while (!queue.empty()) {
    int c = queue.front();
    queue.pop_front();
    next(c, [&](int t) {
      if (!seen[t]) {
        seen[t] = 1;
        queue.push_back(t);
      }
    });
  }
  CellSet r;
  for (int i = 0; i < n; ++i)
    if (seen[i]) r.push_back(i);
  return r;
}
}  // namespace detail

// Cells reached after one or more steps inside W.
inline CellSet reachable_w(const SymbolicImage& g, const CellSet& start) {
  return detail::closure_walk(g.cellCount, start, [&](int c, auto&& visit) {
    for (const auto& e : g.out[c]) visit(e.dst);
  });
}

// Cells that reach the target after one or more steps inside W.
inline CellSet controllable_w(const SymbolicImage& g, const CellSet& target) {
  return detail::closure_walk(g.cellCount, target, [&](int c, auto&& visit) {
    for (int p : g.in[c]) visit(p);
  });
}

struct ExitWitness {
  int cell = -1;
  int node = -1;
  int target = -1;
};

struct ControlSetResult {
  CellSet cells;
  bool invariant = false;
  CellSet transitivityCells;
  std::optional<ExitWitness> exitWitness;
};

struct ControlSetAnalysis {
  std::vector<ControlSetResult> sets;
  // Strongly connected pieces that are neither invariant nor carry a transitivity
  // cell: slow drift through a cell creates a self loop without recurrence.
  std::vector<CellSet> rejected;
  // Pairs of control sets whose grid closures touch.
  std::vector<std::pair<int, int>> touchingClosures;
};

// Tarjan on the W-subgraph, iterative.
inline std::vector<CellSet> strongly_connected(const SymbolicImage& g) {
  const int n = g.cellCount;
  std::vector<int> index(n, -1), low(n, 0), stack;
  std::vector<char> onStack(n, 0);
  std::vector<CellSet> comps;
  int counter = 0;
  for (int root : g.wCells) {
    if (index[root] >= 0) continue;
    std::vector<std::pair<int, std::size_t>> call{{root, 0}};
    index[root] = low[root] = counter++;
    stack.push_back(root);
    onStack[root] = 1;
    while (!call.empty()) {
      auto& [v, pos] = call.back();
      if (pos < g.out[v].size()) {
        int w = g.out[v][pos++].dst;
        if (index[w] < 0) {
          index[w] = low[w] = counter++;
          stack.push_back(w);
          onStack[w] = 1;
          call.push_back({w, 0});
        } else if (onStack[w]) {
          low[v] = std::min(low[v], index[w]);
        }
        continue;
      }
      if (low[v] == index[v]) {
        CellSet comp;
        int w;
        do {
          w = stack.back();
          stack.pop_back();
          onStack[w] = 0;
          comp.push_back(w);
        } while (w != v);
        std::sort(comp.begin(), comp.end());
        comps.push_back(std::move(comp));
      }
      int done = v;
      call.pop_back();
      if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[done]);
    }
  }
  std::sort(comps.begin(), comps.end());
  return comps;
}

// Grid closure: the set plus adjacent W-cells.
inline CellSet grid_closure(const CellGrid& grid, const SymbolicImage& g, const CellSet& d) {
  CellSet r = d;
  for (int c : d)
    for (int nb : grid.neighbours(c))
      if (g.inW[nb]) r.push_back(nb);
  std::sort(r.begin(), r.end());
  r.erase(std::unique(r.begin(), r.end()), r.end());
  return r;
}

inline CellSet transitivity_cells(const CellGrid& grid, const SymbolicImage& g, const CellSet& comp) {
  CellSet t;
  for (int c : comp) {
    CellSet ctrl = controllable_w(g, {c});
    if (!contains(ctrl, c)) continue;
    bool interior = true;
    for (int nb : grid.neighbours(c))
      if (g.inW[nb] && !contains(ctrl, nb)) interior = false;
    if (interior) t.push_back(c);
  }
  return t;
}

inline ControlSetAnalysis find_w_control_sets(const CellGrid& grid, const SymbolicImage& g) {
  ControlSetAnalysis out;
  for (auto& comp : strongly_connected(g)) {
    auto mask = to_mask(comp, g.cellCount);
    bool hasEdge = false;
    std::optional<ExitWitness> exit;
    for (int c : comp)
      for (const auto& e : g.out[c]) {
        if (mask[e.dst]) hasEdge = true;
        else if (!exit) exit = ExitWitness{c, e.labels.front(), e.dst};
      }
    if (!hasEdge) continue;
    ControlSetResult r;
    r.cells = comp;
    r.invariant = !exit.has_value();
    r.exitWitness = exit;
    r.transitivityCells = transitivity_cells(grid, g, comp);
    if (!r.invariant && r.transitivityCells.empty()) {
      out.rejected.push_back(comp);
      continue;
    }
    out.sets.push_back(std::move(r));
  }
  for (std::size_t a = 0; a < out.sets.size(); ++a)
    for (std::size_t b = a + 1; b < out.sets.size(); ++b)
      if (!set_intersection(grid_closure(grid, g, out.sets[a].cells), grid_closure(grid, g, out.sets[b].cells)).empty())
        out.touchingClosures.push_back({static_cast<int>(a), static_cast<int>(b)});
  return out;
}

inline ControlSetAnalysis find_w_control_sets(const SymbolicImage& g, const CellGrid& grid) {
  return find_w_control_sets(grid, g);
}

struct Violation {
  int cell = -1;
  int node = -1;
  int imageCell = -1;
  bool operator==(const Violation&) const = default;
};

struct InvarianceReport {
  bool holds = true;
  std::vector<Violation> violations;
};

// K is invariant in Q when samples of K only land in K or outside Q.
inline InvarianceReport invariant_in_q(const SystemSpec& spec, const CellGrid& grid, const ControlQuadrature& quad,
                                       const CellSet& k) {
  InvarianceReport r;
  auto mask = to_mask(k, grid.cellCount);
  for (int c : k)
    for (int node = 0; node < quad.size(); ++node) {
      std::set<int> bad;
      for (double x : grid.samples(c)) {
        int j = grid.cell_of(eval_map(spec, x, quad.nodes[node]));
        if (j >= 0 && !mask[j]) bad.insert(j);
      }
      for (int j : bad) r.violations.push_back({c, node, j});
    }
  r.holds = r.violations.empty();
  return r;
}

struct CoverElement {
  CellSet cells;
  std::vector<int> word;
  bool inK = false;
  int time() const { return static_cast<int>(word.size()); }
};

struct SteeringCover {
  std::vector<CoverElement> elements;
  CellSet unreachable;
  bool total() const { return unreachable.empty(); }
  int max_time() const {
    int t = 0;
    for (const auto& e : elements) t = std::max(t, e.time());
    return t;
  }
};

// Graph distance to K along reversed edges; large for cells that cannot reach K.
inline std::vector<int> distance_to(const SymbolicImage& g, const CellSet& k) {
  const int inf = std::numeric_limits<int>::max() / 4;
  std::vector<int> d(g.cellCount, inf);
  std::deque<int> queue;
  for (int c : k) {
    d[c] = 0;
    queue.push_back(c);
  }
  while (!queue.empty()) {
    int c = queue.front();
    queue.pop_front();
    for (int p : g.in[c])
      if (d[p] == inf) {
        d[p] = d[c] + 1;
        queue.push_back(p);
      }
  }
  return d;
}

// For every cell, a control word that keeps all its samples in Q and ends with
// all of them in K. Each step picks the node that minimises the summed graph
// distance to K (lowest index on ties). Cells are grouped by (word, in K).
inline SteeringCover steering_cover(const SystemSpec& spec, const CellGrid& grid, const ControlQuadrature& quad,
                                    const SymbolicImage& g, const CellSet& k, int maxLength = -1) {
  if (k.empty()) throw std::invalid_argument("steering cover needs a nonempty target");
  if (maxLength < 0) maxLength = 2 * grid.cellCount + 8;
  auto dist = distance_to(g, k);
  auto kMask = to_mask(k, grid.cellCount);
  std::vector<std::vector<int>> words(grid.cellCount);
  std::vector<char> ok(grid.cellCount, 0);
  parallel_for(grid.cellCount, [&](int c) {
    auto pts = grid.samples(c);
    std::vector<int> word;
    for (int step = 0; step < maxLength; ++step) {
      long long best = std::numeric_limits<long long>::max();
      int bestNode = -1;
      std::vector<double> bestPts;
      for (int node = 0; node < quad.size(); ++node) {
        std::vector<double> next(pts.size());
        long long score = 0;
        bool inside = true;
        for (std::size_t s = 0; s < pts.size() && inside; ++s) {
          next[s] = eval_map(spec, pts[s], quad.nodes[node]);
          int j = grid.cell_of(next[s]);
          if (j < 0) inside = false;
          else score += dist[j];
        }
        if (inside && score < best) {
          best = score;
          bestNode = node;
          bestPts = std::move(next);
        }
      }
      if (bestNode < 0) return;
      word.push_back(bestNode);
      pts = std::move(bestPts);
      bool allK = true;
      for (double x : pts) allK = allK && kMask[grid.cell_of(x)];
      if (allK) {
        words[c] = word;
        ok[c] = 1;
        return;
      }
    }
  });
  SteeringCover cover;
  std::map<std::pair<std::vector<int>, bool>, CellSet> groups;
  std::vector<std::pair<std::vector<int>, bool>> order;
  for (int c = 0; c < grid.cellCount; ++c) {
    if (!ok[c]) {
      cover.unreachable.push_back(c);
      continue;
    }
    auto key = std::make_pair(words[c], static_cast<bool>(kMask[c]));
    if (!groups.count(key)) order.push_back(key);
    groups[key].push_back(c);
  }
  for (const auto& key : order) cover.elements.push_back({groups[key], key.first, key.second});
  return cover;
}

}  // namespace qsmlab
