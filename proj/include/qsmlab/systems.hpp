#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/tools/roots.hpp>

namespace qsmlab {

enum class Family { circle1, circle2, finite, table };

inline const char* family_name(Family f) {
  switch (f) {
    case Family::circle1: return "circle1";
    case Family::circle2: return "circle2";
    case Family::finite: return "finite";
    case Family::table: return "table";
  }
  return "?";
}

inline Family parse_family(const std::string& s) {
  if (s == "circle1") return Family::circle1;
  if (s == "circle2") return Family::circle2;
  if (s == "finite") return Family::finite;
  if (s == "table") return Family::table;
  throw std::invalid_argument("unknown system family '" + s + "'");
}

struct ControlRange {
  enum class Kind { interval, finiteSet };
  Kind kind = Kind::interval;
  double lo = -1.0;
  double hi = 1.0;
  std::vector<double> values;
  std::vector<std::string> labels;

  int index_of(double w) const {
    for (std::size_t k = 0; k < values.size(); ++k)
      if (values[k] == w) return static_cast<int>(k);
    return -1;
  }
  bool contains(double w) const {
    if (kind == Kind::interval) return w >= lo && w <= hi;
    return index_of(w) >= 0;
  }
  void validate() const {
    if (kind == Kind::interval) {
      if (!(lo < hi)) throw std::invalid_argument("control interval needs lo < hi");
      return;
    }
    if (values.empty()) throw std::invalid_argument("finite control set is empty");
    auto v = values;
    std::sort(v.begin(), v.end());
    if (std::adjacent_find(v.begin(), v.end()) != v.end())
      throw std::invalid_argument("finite control set has duplicates");
  }
};

struct NoiseSpec {
  enum class Kind { uniformInterval, uniformFinite };
  Kind kind = Kind::uniformInterval;
  double lo = -1.0;
  double hi = 1.0;
  std::vector<double> values;
  std::vector<std::string> labels;
};

struct SystemSpec {
  Family family = Family::circle1;
  double sigma = 0.1;
  double A = 0.05;
  double alpha = 0.07;
  // Rotation y = x + shift applied as a conjugacy: f_shift = R o f o R^-1.
  double shift = 0.0;
  int stateCount = 0;
  std::vector<std::vector<int>> table;  // table[state][controlIndex]
  std::vector<int> qStates;             // default Q for finite systems
  ControlRange control;

  bool is_circle() const { return family == Family::circle1 || family == Family::circle2; }
  bool is_finite() const { return !is_circle(); }
};

inline double wrap01(double y) {
  y -= std::floor(y);
  if (y >= 1.0) y = 0.0;
  return y;
}

inline NoiseSpec noise_of(const SystemSpec& s) {
  NoiseSpec n;
  if (s.control.kind == ControlRange::Kind::interval) {
    n.kind = NoiseSpec::Kind::uniformInterval;
    n.lo = s.control.lo;
    n.hi = s.control.hi;
  } else {
    n.kind = NoiseSpec::Kind::uniformFinite;
    n.values = s.control.values;
    n.labels = s.control.labels;
  }
  return n;
}

inline void validate(const SystemSpec& s) {
  s.control.validate();
  if (s.is_circle()) return;
  if (s.stateCount <= 0 || static_cast<int>(s.table.size()) != s.stateCount)
    throw std::invalid_argument("finite table must list every state");
  for (const auto& row : s.table) {
    if (row.size() != s.control.values.size())
      throw std::invalid_argument("finite table must be total over controls");
    for (int y : row)
      if (y < 0 || y >= s.stateCount) throw std::invalid_argument("table image out of range");
  }
}

// Circle map without the final mod-1 reduction.
inline double circle_lift(const SystemSpec& s, double x, double w) {
  const double k = s.family == Family::circle1 ? 2.0 * std::numbers::pi : 4.0 * std::numbers::pi;
  return x + s.sigma * std::cos(k * x) + s.A * w + s.alpha;
}

inline double eval_map(const SystemSpec& s, double x, double w) {
  if (!s.control.contains(w)) throw std::domain_error("control value outside the control range");
  if (s.is_circle()) {
    if (s.shift == 0.0) return wrap01(circle_lift(s, x, w));
    return wrap01(wrap01(circle_lift(s, wrap01(x - s.shift), w)) + s.shift);
  }
  int xi = static_cast<int>(x);
  if (xi < 0 || xi >= s.stateCount || static_cast<double>(xi) != x)
    throw std::domain_error("state outside the finite state space");
  return static_cast<double>(s.table[xi][s.control.index_of(w)]);
}

inline std::vector<double> trajectory(const SystemSpec& s, double x0, const std::vector<double>& word) {
  std::vector<double> out{x0};
  out.reserve(word.size() + 1);
  for (double w : word) out.push_back(eval_map(s, out.back(), w));
  return out;
}

inline SystemSpec make_table(std::vector<std::vector<int>> table, std::vector<std::string> labels,
                             std::vector<int> qStates, Family family = Family::table) {
  SystemSpec s;
  s.family = family;
  s.stateCount = static_cast<int>(table.size());
  s.table = std::move(table);
  s.qStates = std::move(qStates);
  s.control.kind = ControlRange::Kind::finiteSet;
  for (std::size_t k = 0; k < labels.size(); ++k) s.control.values.push_back(static_cast<double>(k));
  s.control.labels = std::move(labels);
  validate(s);
  return s;
}

// Three states, controls {a,b}; state 2 is absorbing and outside Q = {0,1}.
inline SystemSpec make_fin3() {
  return make_table({{0, 1}, {0, 2}, {2, 2}}, {"a", "b"}, {0, 1}, Family::finite);
}

inline SystemSpec make_circle(Family f, double sigma, double A, double alpha) {
  SystemSpec s;
  s.family = f;
  s.sigma = sigma;
  s.A = A;
  s.alpha = alpha;
  s.control.kind = ControlRange::Kind::interval;
  s.control.lo = -1.0;
  s.control.hi = 1.0;
  return s;
}

inline SystemSpec shifted(SystemSpec s, double c) {
  if (!s.is_circle()) throw std::invalid_argument("shift conjugacy needs a circle family");
  s.shift = wrap01(s.shift + c);
  return s;
}

// perm[old] = new label.
inline SystemSpec relabeled(const SystemSpec& s, const std::vector<int>& perm) {
  if (!s.is_finite() || static_cast<int>(perm.size()) != s.stateCount)
    throw std::invalid_argument("relabeling needs a permutation of the finite states");
  SystemSpec r = s;
  for (int x = 0; x < s.stateCount; ++x)
    for (std::size_t k = 0; k < s.table[x].size(); ++k) r.table[perm[x]][k] = perm[s.table[x][k]];
  r.qStates.clear();
  for (int q : s.qStates) r.qStates.push_back(perm[q]);
  std::sort(r.qStates.begin(), r.qStates.end());
  return r;
}

// Root of x -> lift(x, w) - x on [lo, hi] by bisection.
inline double fixed_point(const SystemSpec& s, double w, double lo, double hi, double tol = 1e-10) {
  if (!s.is_circle()) throw std::invalid_argument("fixed_point needs a circle family");
  auto g = [&](double x) { return circle_lift(s, x, w) - x; };
  if (g(lo) * g(hi) > 0.0) throw std::domain_error("no sign change of f(x,w) - x on the bracket");
  auto stop = [tol](double a, double b) { return std::abs(b - a) < tol; };
  auto r = boost::math::tools::bisect(g, lo, hi, stop);
  return 0.5 * (r.first + r.second);
}

}  // namespace qsmlab
