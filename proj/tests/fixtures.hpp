#pragma once

#include <cmath>
#include <vector>

#include "qsmlab/verify.hpp"

namespace fixtures {

using namespace qsmlab;

inline Model finite_model(const SystemSpec& s) {
  auto g = build_finite_grid(s);
  return make_model(s, g, control_quadrature(noise_of(s), 0));
}

inline Model fin3() { return finite_model(make_fin3()); }

// Two copies of the three-state system sharing one absorbing state 4; Q = {0,1,2,3}.
inline SystemSpec two_basin_spec() {
  return make_table({{0, 1}, {0, 4}, {2, 3}, {2, 4}, {4, 4}}, {"a", "b"}, {0, 1, 2, 3});
}
inline Model two_basin() { return finite_model(two_basin_spec()); }

// Both controls keep {0,1}.
inline SystemSpec stationary_spec() { return make_table({{0, 1}, {1, 0}}, {"a", "b"}, {0, 1}); }
inline Model stationary() { return finite_model(stationary_spec()); }

inline SystemSpec identity_spec(int n) {
  std::vector<std::vector<int>> t;
  std::vector<int> q;
  for (int i = 0; i < n; ++i) {
    t.push_back({i});
    q.push_back(i);
  }
  return make_table(t, {"a"}, q);
}

// State 1 leaves Q under every control.
inline SystemSpec infeasible_spec() { return make_table({{0, 1}, {2, 2}, {2, 2}}, {"a", "b"}, {0, 1}); }

inline Model example1(int cells = 512, double alpha = 0.07) {
  auto s = make_circle(Family::circle1, 0.1, 0.05, alpha);
  return make_model(s, build_grid(0.2, 0.5, cells, 5), control_quadrature(noise_of(s), 8));
}

inline Model example2(int cells = 512) {
  auto s = make_circle(Family::circle2, 0.1, 0.05, 0.07);
  return make_model(s, build_grid(0.1, 0.7, cells, 5), control_quadrature(noise_of(s), 8));
}

inline const double kRhoFin3 = (1.0 + std::sqrt(5.0)) / 4.0;

}  // namespace fixtures
