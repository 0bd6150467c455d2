#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>
#include <vector>

#include "parallel.hpp"
#include "systems.hpp"

namespace qsmlab {

using CellSet = std::vector<int>;  // sorted, duplicate free

/** \brief Uniform cells over Q, or one cell per state for finite systems. */
struct CellGrid {
  double qlo = 0.0;
  double qhi = 1.0;
  int cellCount = 1;
  int samplesPerCell = 1;
  bool periodic = false;
  std::vector<int> states;       // finite grids: state held by each cell
  std::vector<int> cellOfState;  // finite grids: inverse lookup, -1 outside Q

  bool finite() const { return !states.empty(); }
  double width() const { return (qhi - qlo) / cellCount; }
  bool full_circle() const { return periodic && qhi - qlo >= 1.0; }

  double cell_lo(int i) const { return finite() ? states[i] : qlo + i * width(); }
  double cell_hi(int i) const { return finite() ? states[i] : qlo + (i + 1) * width(); }

  int cell_of(double x) const {
    if (finite()) {
      int xi = static_cast<int>(x);
      if (xi < 0 || xi >= static_cast<int>(cellOfState.size())) return -1;
      return cellOfState[xi];
    }
    double t = x - qlo;
    if (periodic) t -= std::floor(t);
    const double len = qhi - qlo;
    if (!full_circle() && (t < 0.0 || t > len)) return -1;
    int i = static_cast<int>(std::floor(t / width()));
    return std::clamp(i, 0, cellCount - 1);
  }

  std::vector<double> samples(int i) const {
    if (finite()) return {static_cast<double>(states[i])};
    std::vector<double> s(samplesPerCell);
    for (int k = 0; k < samplesPerCell; ++k) {
      double x = qlo + width() * (i + (k + 0.5) / samplesPerCell);
      s[k] = periodic ? wrap01(x) : x;
    }
    return s;
  }

  // Distance from x to the boundary of Q; 0 for finite grids.
  double margin(double x) const {
    if (finite() || full_circle()) return 0.0;
    double t = x - qlo;
    if (periodic) t -= std::floor(t);
    return std::min(t, (qhi - qlo) - t);
  }

  std::vector<int> neighbours(int i) const {
    std::vector<int> nb;
    if (finite()) return nb;
    if (i > 0) nb.push_back(i - 1);
    else if (full_circle() && cellCount > 1) nb.push_back(cellCount - 1);
    if (i + 1 < cellCount) nb.push_back(i + 1);
    else if (full_circle() && cellCount > 1) nb.push_back(0);
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
    return nb;
  }

  CellSet all_cells() const {
    CellSet c(cellCount);
    for (int i = 0; i < cellCount; ++i) c[i] = i;
    return c;
  }
};

inline CellGrid build_grid(double qlo, double qhi, int n, int samplesPerCell, bool periodic = true) {
  if (n < 1) throw std::invalid_argument("grid needs at least one cell");
  if (samplesPerCell < 1) throw std::invalid_argument("grid needs at least one sample per cell");
  if (!(qlo < qhi)) throw std::invalid_argument("grid needs qlo < qhi");
  if (periodic && qhi - qlo > 1.0) throw std::invalid_argument("Q longer than the circle");
  CellGrid g;
  g.qlo = qlo;
  g.qhi = qhi;
  g.cellCount = n;
  g.samplesPerCell = samplesPerCell;
  g.periodic = periodic;
  return g;
}

inline CellGrid build_finite_grid(const SystemSpec& s, std::vector<int> qStates = {}) {
  if (qStates.empty()) qStates = s.qStates;
  if (qStates.empty()) throw std::invalid_argument("finite grid needs the states of Q");
  std::sort(qStates.begin(), qStates.end());
  qStates.erase(std::unique(qStates.begin(), qStates.end()), qStates.end());
  CellGrid g;
  g.cellCount = static_cast<int>(qStates.size());
  g.samplesPerCell = 1;
  g.states = qStates;
  g.cellOfState.assign(s.stateCount, -1);
  for (int i = 0; i < g.cellCount; ++i) {
    if (qStates[i] < 0 || qStates[i] >= s.stateCount) throw std::invalid_argument("Q state out of range");
    g.cellOfState[qStates[i]] = i;
  }
  g.qlo = qStates.front();
  g.qhi = qStates.back();
  return g;
}

struct ControlQuadrature {
  std::vector<double> nodes;
  std::vector<double> weights;
  std::vector<std::string> labels;
  int size() const { return static_cast<int>(nodes.size()); }
  std::string label(int k) const {
    if (k < static_cast<int>(labels.size())) return labels[k];
    return std::to_string(nodes[k]);
  }
};

// Midpoint rule for intervals; finite sets are reproduced exactly (m <= 0 means "use the set").
inline ControlQuadrature control_quadrature(const NoiseSpec& noise, int m) {
  ControlQuadrature q;
  if (noise.kind == NoiseSpec::Kind::uniformFinite) {
    int size = static_cast<int>(noise.values.size());
    if (size == 0) throw std::invalid_argument("empty finite noise");
    if (m > 0 && m != size) throw std::invalid_argument("finite noise needs m equal to the set size");
    q.nodes = noise.values;
    q.weights.assign(size, 1.0 / size);
    q.labels = noise.labels;
    return q;
  }
  if (m < 1) throw std::invalid_argument("quadrature needs m >= 1");
  const double h = (noise.hi - noise.lo) / m;
  for (int k = 0; k < m; ++k) {
    q.nodes.push_back(noise.lo + (k + 0.5) * h);
    q.weights.push_back(1.0 / m);
  }
  return q;
}

/** \brief Row-compressed sparse matrix; rows list columns in increasing order. */
struct SparseMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<int> rowPtr{0};
  std::vector<int> colIdx;
  std::vector<double> values;

  double row_sum(int i) const {
    double s = 0.0;
    for (int p = rowPtr[i]; p < rowPtr[i + 1]; ++p) s += values[p];
    return s;
  }
  double at(int i, int j) const {
    auto b = colIdx.begin() + rowPtr[i], e = colIdx.begin() + rowPtr[i + 1];
    auto it = std::lower_bound(b, e, j);
    return (it != e && *it == j) ? values[it - colIdx.begin()] : 0.0;
  }
  std::size_t nnz() const { return values.size(); }

  // Row vector times matrix.
  std::vector<double> left_multiply(const std::vector<double>& x) const {
    std::vector<double> y(cols, 0.0);
    for (int i = 0; i < rows; ++i) {
      if (x[i] == 0.0) continue;
      for (int p = rowPtr[i]; p < rowPtr[i + 1]; ++p) y[colIdx[p]] += x[i] * values[p];
    }
    return y;
  }

  static SparseMatrix from_rows(int n, const std::vector<std::vector<std::pair<int, double>>>& rowsIn) {
    SparseMatrix m;
    m.rows = n;
    m.cols = n;
    for (const auto& r : rowsIn) {
      for (auto [j, v] : r) {
        m.colIdx.push_back(j);
        m.values.push_back(v);
      }
      m.rowPtr.push_back(static_cast<int>(m.colIdx.size()));
    }
    return m;
  }
};

/** \brief Sub-stochastic Ulam matrix on Q together with its per-node parts. */
struct UlamOperator {
  SparseMatrix P;
  std::vector<SparseMatrix> byNode;  // byNode[k](i,j): fraction of samples of i sent to j by node k
  std::vector<double> weights;
  int size() const { return P.rows; }
};

inline UlamOperator assemble_ulam(const SystemSpec& spec, const CellGrid& grid, const ControlQuadrature& quad) {
  const int n = grid.cellCount, m = quad.size();
  std::vector<std::vector<std::vector<std::pair<int, double>>>> nodeRows(m, std::vector<std::vector<std::pair<int, double>>>(n));
  std::vector<std::vector<std::pair<int, double>>> sumRows(n);
  parallel_for(n, [&](int i) {
    const auto pts = grid.samples(i);
    const double inv = 1.0 / static_cast<double>(pts.size());
    std::map<int, double> total;
    for (int k = 0; k < m; ++k) {
      std::map<int, int> hits;
      for (double x : pts) {
        int j = grid.cell_of(eval_map(spec, x, quad.nodes[k]));
        if (j >= 0) ++hits[j];
      }
      for (auto [j, c] : hits) {
        nodeRows[k][i].push_back({j, c * inv});
        total[j] += quad.weights[k] * (c * inv);
      }
    }
    for (auto [j, v] : total) sumRows[i].push_back({j, v});
  });
  UlamOperator U;
  U.P = SparseMatrix::from_rows(n, sumRows);
  for (int k = 0; k < m; ++k) U.byNode.push_back(SparseMatrix::from_rows(n, nodeRows[k]));
  U.weights = quad.weights;
  return U;
}

struct SymbolicEdge {
  int dst = 0;
  std::vector<int> labels;  // quadrature node indices
};

/** \brief One-step cell graph on W with node-labelled edges. */
struct SymbolicImage {
  int cellCount = 0;
  CellSet wCells;
  std::vector<char> inW;
  std::vector<std::vector<SymbolicEdge>> out;
  std::vector<std::vector<int>> in;  // predecessor lists

  std::size_t edge_count() const {
    std::size_t e = 0;
    for (const auto& o : out) e += o.size();
    return e;
  }
  bool has_edge(int i, int j) const {
    for (const auto& e : out[i])
      if (e.dst == j) return true;
    return false;
  }
};

inline SymbolicImage symbolic_image(const SystemSpec& spec, const CellGrid& grid, const ControlQuadrature& quad,
                                    CellSet w = {}) {
  if (w.empty()) w = grid.all_cells();
  SymbolicImage g;
  g.cellCount = grid.cellCount;
  g.wCells = w;
  g.inW.assign(grid.cellCount, 0);
  for (int c : w) g.inW[c] = 1;
  g.out.assign(grid.cellCount, {});
  g.in.assign(grid.cellCount, {});
  parallel_for(static_cast<int>(w.size()), [&](int idx) {
    int i = w[idx];
    std::map<int, std::vector<int>> lab;
    for (int k = 0; k < quad.size(); ++k)
      for (double x : grid.samples(i)) {
        int j = grid.cell_of(eval_map(spec, x, quad.nodes[k]));
        if (j >= 0 && g.inW[j] && (lab[j].empty() || lab[j].back() != k)) lab[j].push_back(k);
      }
    for (auto& [j, l] : lab) g.out[i].push_back({j, l});
  });
  for (int i : w)
    for (const auto& e : g.out[i]) g.in[e.dst].push_back(i);
  return g;
}

}  // namespace qsmlab
