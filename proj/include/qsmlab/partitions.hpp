#pragma once

#include <algorithm>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "controlsets.hpp"
#include "discretization.hpp"

namespace qsmlab {

enum class FeedbackRule { lexicographic, maxMargin };

inline FeedbackRule parse_feedback_rule(const std::string& s) {
  if (s == "lexicographic") return FeedbackRule::lexicographic;
  if (s == "max-margin" || s == "maxMargin") return FeedbackRule::maxMargin;
  throw std::invalid_argument("unknown feedback rule '" + s + "'");
}

/** \brief Cell blocks with feedback words of length tau keeping their samples in the domain. */
struct InvariantPartition {
  int tau = 1;
  std::vector<CellSet> elements;
  std::vector<std::vector<int>> feedback;  // node indices
  CellSet nullCells;
  CellSet domain;
  int straddleDefects = 0;

  int size() const { return static_cast<int>(elements.size()); }

  std::vector<int> element_lookup(int cellCount) const {
    std::vector<int> e(cellCount, -1);
    for (int i = 0; i < size(); ++i)
      for (int c : elements[i]) e[c] = i;
    return e;
  }
};

// Samples of `cells`; whether every one stays in the domain along `word`.
inline bool keeps_inside(const SystemSpec& spec, const CellGrid& grid, const ControlQuadrature& quad,
                         const std::vector<char>& mask, const CellSet& cells, const std::vector<int>& word) {
  for (int c : cells)
    for (double x : grid.samples(c)) {
      for (int node : word) {
        x = eval_map(spec, x, quad.nodes[node]);
        int j = grid.cell_of(x);
        if (j < 0 || !mask[j]) return false;
      }
    }
  return true;
}

namespace detail {
inline std::vector<double> gather_samples(const CellGrid& grid, const CellSet& cells) {
  std::vector<double> pts;
  for (int c : cells)
    for (double x : grid.samples(c)) pts.push_back(x);
  return pts;
}

// Depth-first walk over node words of length tau whose every prefix keeps all
// points inside the mask. visit(word, margin) returns false to stop the walk.
inline void feasible_words(const SystemSpec& spec, const CellGrid& grid, const ControlQuadrature& quad,
                           const std::vector<char>& mask, const std::vector<double>& start, int tau,
                           const std::function<bool(const std::vector<int>&, double)>& visit) {
  std::vector<int> word;
  std::vector<std::vector<double>> layer{start};
  std::vector<double> margins{std::numeric_limits<double>::infinity()};
  bool stop = false;
  std::function<void()> rec = [&] {
    if (stop) return;
    if (static_cast<int>(word.size()) == tau) {
      if (!visit(word, margins.back())) stop = true;
      return;
    }
    for (int node = 0; node < quad.size() && !stop; ++node) {
      const auto& pts = layer.back();
      std::vector<double> next(pts.size());
      double margin = margins.back();
      bool inside = true;
      for (std::size_t s = 0; s < pts.size(); ++s) {
        next[s] = eval_map(spec, pts[s], quad.nodes[node]);
        int j = grid.cell_of(next[s]);
        if (j < 0 || !mask[j]) {
          inside = false;
          break;
        }
        margin = std::min(margin, grid.margin(next[s]));
      }
      if (!inside) continue;
      word.push_back(node);
      layer.push_back(std::move(next));
      margins.push_back(margin);
      rec();
      word.pop_back();
      layer.pop_back();
      margins.pop_back();
    }
  };
  rec();
}
}  // namespace detail

inline std::optional<std::vector<int>> synthesize_feedback(const CellSet& p, int tau, const SystemSpec& spec,
                                                           const CellGrid& grid, const ControlQuadrature& quad,
                                                           const CellSet& domain,
                                                           FeedbackRule rule = FeedbackRule::lexicographic) {
  auto mask = to_mask(domain, grid.cellCount);
  auto pts = detail::gather_samples(grid, p);
  std::optional<std::vector<int>> best;
  double bestMargin = -1.0;
  detail::feasible_words(spec, grid, quad, mask, pts, tau, [&](const std::vector<int>& w, double margin) {
    if (rule == FeedbackRule::lexicographic) {
      best = w;
      return false;
    }
    if (!best || margin > bestMargin) {
      best = w;
      bestMargin = margin;
    }
    return true;
  });
  return best;
}

inline CellSet positive_cells(const CellSet& domain, const std::vector<double>& eta, double threshold) {
  CellSet p;
  for (int c : domain)
    if (eta[c] > threshold) p.push_back(c);
  return p;
}

// Blocks of `coarseness` consecutive eta-positive cells; infeasible blocks are
// split into single cells. Empty result means some single cell has no feedback.
inline std::optional<InvariantPartition> build_invariant_partition(
    const CellGrid& grid, const std::vector<double>& eta, int tau, int coarseness, const SystemSpec& spec,
    const ControlQuadrature& quad, CellSet domain = {}, FeedbackRule rule = FeedbackRule::lexicographic,
    double threshold = 1e-12) {
  if (coarseness < 1) throw std::invalid_argument("coarseness must be >= 1");
  if (tau < 1) throw std::invalid_argument("tau must be >= 1");
  if (domain.empty()) domain = grid.all_cells();
  CellSet pos = positive_cells(domain, eta, threshold);
  std::vector<CellSet> blocks;
  for (std::size_t a = 0; a < pos.size(); a += coarseness)
    blocks.emplace_back(pos.begin() + a, pos.begin() + std::min(pos.size(), a + coarseness));
  std::vector<std::optional<std::vector<int>>> words(blocks.size());
  parallel_for(static_cast<int>(blocks.size()),
               [&](int b) { words[b] = synthesize_feedback(blocks[b], tau, spec, grid, quad, domain, rule); });
  InvariantPartition part;
  part.tau = tau;
  part.domain = domain;
  part.nullCells = set_difference(domain, pos);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    if (words[b]) {
      part.elements.push_back(blocks[b]);
      part.feedback.push_back(*words[b]);
      continue;
    }
    for (int c : blocks[b]) {
      auto w = blocks[b].size() == 1 ? words[b] : synthesize_feedback({c}, tau, spec, grid, quad, domain, rule);
      if (!w) return std::nullopt;
      part.elements.push_back({c});
      part.feedback.push_back(*w);
    }
  }
  return part;
}

// Pairs (element, cell) whose samples leave the domain under the element's feedback.
inline std::vector<std::pair<int, int>> validate_partition(const InvariantPartition& part, const SystemSpec& spec,
                                                           const CellGrid& grid, const ControlQuadrature& quad) {
  std::vector<std::pair<int, int>> bad;
  auto mask = to_mask(part.domain, grid.cellCount);
  for (int i = 0; i < part.size(); ++i) {
    if (static_cast<int>(part.feedback[i].size()) != part.tau) bad.push_back({i, -1});
    for (int c : part.elements[i])
      if (!keeps_inside(spec, grid, quad, mask, {c}, part.feedback[i])) bad.push_back({i, c});
  }
  return bad;
}

namespace detail {
// Element receiving most samples of `cell` after `word`; ties to the lower index.
inline std::vector<std::pair<int, int>> landing_counts(const SystemSpec& spec, const CellGrid& grid,
                                                       const ControlQuadrature& quad, const std::vector<int>& lookup,
                                                       int cell, const std::vector<int>& word, int* missed) {
  std::map<int, int> count;
  int miss = 0;
  for (double x : grid.samples(cell)) {
    for (int node : word) x = eval_map(spec, x, quad.nodes[node]);
    int j = grid.cell_of(x);
    int e = j >= 0 ? lookup[j] : -1;
    if (e >= 0) ++count[e];
    else ++miss;
  }
  std::vector<std::pair<int, int>> order(count.begin(), count.end());
  std::stable_sort(order.begin(), order.end(), [](auto a, auto b) { return a.second > b.second; });
  if (missed) *missed = miss;
  return order;
}
}  // namespace detail

inline InvariantPartition square_partition(const InvariantPartition& c, const SystemSpec& spec, const CellGrid& grid,
                                           const ControlQuadrature& quad) {
  auto lookup = c.element_lookup(grid.cellCount);
  std::map<std::pair<int, int>, CellSet> blocks;
  int defects = 0;
  for (int i = 0; i < c.size(); ++i)
    for (int cell : c.elements[i]) {
      int missed = 0;
      auto order = detail::landing_counts(spec, grid, quad, lookup, cell, c.feedback[i], &missed);
      int j = order.empty() ? i : order.front().first;
      if (missed > 0 || order.size() > 1) ++defects;
      blocks[{i, j}].push_back(cell);
    }
  InvariantPartition sq;
  sq.tau = 2 * c.tau;
  sq.domain = c.domain;
  sq.nullCells = c.nullCells;
  sq.straddleDefects = defects;
  for (auto& [key, cells] : blocks) {
    auto w = c.feedback[key.first];
    w.insert(w.end(), c.feedback[key.second].begin(), c.feedback[key.second].end());
    sq.elements.push_back(cells);
    sq.feedback.push_back(w);
  }
  return sq;
}

inline InvariantPartition restrict_to_k(const InvariantPartition& c, const CellSet& k, const SystemSpec& spec,
                                        const CellGrid& grid, const ControlQuadrature& quad) {
  if (k.empty()) throw std::invalid_argument("restriction needs a nonempty K");
  auto inv = invariant_in_q(spec, grid, quad, k);
  if (!inv.holds) throw std::invalid_argument("K is not invariant in Q");
  InvariantPartition r;
  r.tau = c.tau;
  r.domain = k;
  r.nullCells = set_intersection(c.nullCells, k);
  for (int i = 0; i < c.size(); ++i) {
    CellSet e = set_intersection(c.elements[i], k);
    if (e.empty()) continue;
    r.elements.push_back(e);
    r.feedback.push_back(c.feedback[i]);
  }
  return r;
}

// Cells of Q \ K follow their steering word into K and then the first
// tau - tau_j symbols of the feedback of the element they land in.
inline InvariantPartition extend_from_k(const InvariantPartition& ck, const SteeringCover& cover,
                                        const SystemSpec& spec, const CellGrid& grid, const ControlQuadrature& quad,
                                        const CellSet& qDomain, const std::vector<double>& eta,
                                        double threshold = 1e-12, int* defects = nullptr) {
  if (!cover.total()) {
    std::string list;
    for (int c : cover.unreachable) list += " " + std::to_string(c);
    throw std::invalid_argument("steering cover is partial; uncovered cells:" + list);
  }
  if (ck.tau < cover.max_time()) throw std::invalid_argument("tau is below the largest steering time");
  auto lookup = ck.element_lookup(grid.cellCount);
  auto qMask = to_mask(qDomain, grid.cellCount);
  auto kMask = to_mask(ck.domain, grid.cellCount);
  std::map<std::pair<int, int>, CellSet> blocks;
  int bad = 0;
  for (int j = 0; j < static_cast<int>(cover.elements.size()); ++j) {
    const auto& el = cover.elements[j];
    if (el.inK) continue;
    for (int cell : el.cells) {
      if (kMask[cell] || !qMask[cell] || !(eta[cell] > threshold)) continue;
      auto order = detail::landing_counts(spec, grid, quad, lookup, cell, el.word, nullptr);
      if (order.empty()) {
        ++bad;
        continue;
      }
      int chosen = order.front().first;
      for (auto [i, cnt] : order) {
        auto w = el.word;
        w.insert(w.end(), ck.feedback[i].begin(), ck.feedback[i].begin() + (ck.tau - el.time()));
        if (keeps_inside(spec, grid, quad, qMask, {cell}, w)) {
          chosen = i;
          break;
        }
      }
      blocks[{j, chosen}].push_back(cell);
    }
  }
  InvariantPartition q = ck;
  q.domain = qDomain;
  for (auto& [key, cells] : blocks) {
    const auto& el = cover.elements[key.first];
    auto w = el.word;
    w.insert(w.end(), ck.feedback[key.second].begin(), ck.feedback[key.second].begin() + (ck.tau - el.time()));
    q.elements.push_back(cells);
    q.feedback.push_back(w);
  }
  CellSet covered;
  for (const auto& e : q.elements) covered = set_union(covered, e);
  q.nullCells = set_difference(qDomain, covered);
  if (defects) *defects = bad;
  return q;
}

}  // namespace qsmlab
