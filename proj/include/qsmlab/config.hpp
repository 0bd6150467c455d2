#pragma once

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "discretization.hpp"
#include "entropy.hpp"
#include "partitions.hpp"
#include "qsm.hpp"
#include "systems.hpp"
#include "verify.hpp"

namespace qsmlab {

using Json = nlohmann::json;

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/** \brief Parsed run configuration. */
struct RunConfig {
  Json doc;
  SystemSpec spec;
  double qlo = 0.0, qhi = 1.0;
  std::vector<int> qStates;
  bool hasW = false;
  double wlo = 0.0, whi = 1.0;
  std::vector<int> wStates;
  int cells = 512;
  int samplesPerCell = 5;
  int m = 8;
  QsmOptions qsm;
  std::vector<int> tauList{1, 2, 3};
  std::vector<int> coarsenessList{1, 2, 4, 8};
  FeedbackRule rule = FeedbackRule::lexicographic;
  int nMax = 8;
  std::size_t nodeBudget = 200000;
  std::string logBase = "e";
  double equalityTol = 0.05;
  std::vector<std::string> checks{"conjugacy", "k_vs_q", "incremental_k_vs_q", "comparison", "support", "invariant_sets"};
  double shift = 0.25;
  std::vector<int> perm;
  bool hasK = false;
  double klo = 0.0, khi = 1.0;
  std::vector<int> kStates;
  std::vector<std::vector<int>> components;
  int trials = 10000;
  int steps = 50;
  std::string outDir = "out";
  std::uint64_t seed = 12345;

  bool finite() const { return spec.is_finite(); }
};

namespace detail {
template <class T>
T get_or(const Json& j, const char* key, T def) {
  if (!j.is_object() || !j.contains(key)) return def;
  try {
    return j.at(key).get<T>();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

inline Json parse_scalar(const std::string& text) {
  try {
    return Json::parse(text);
  } catch (const std::exception&) {
    return Json(text);
  }
}
}  // namespace detail

// key=value with a dotted key; the value is read as JSON when it parses, else as a string.
inline void apply_override(Json& doc, const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override needs key=value: '" + kv + "'");
  std::string key = kv.substr(0, eq);
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    auto dot = key.find('.', start);
    std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw ConfigError("empty key segment in override '" + kv + "'");
    if (!node->is_object()) *node = Json::object();
    node = &(*node)[part];
    if (dot == std::string::npos) break;
    start = dot + 1;
  }
  *node = detail::parse_scalar(kv.substr(eq + 1));
}

inline Json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  try {
    return Json::parse(in, nullptr, true, true);
  } catch (const std::exception& e) {
    throw ConfigError("config '" + path + "' does not parse: " + e.what());
  }
}

inline RunConfig parse_config(const Json& doc, const std::string& baseDir = ".") {
  RunConfig c;
  c.doc = doc;
  if (!doc.is_object()) throw ConfigError("config must be an object");
  const Json sys = doc.value("system", Json::object());
  std::string fam = detail::get_or<std::string>(sys, "family", "circle1");
  Family f;
  try {
    f = parse_family(fam);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  if (f == Family::circle1 || f == Family::circle2) {
    c.spec = make_circle(f, detail::get_or(sys, "sigma", 0.1), detail::get_or(sys, "A", 0.05),
                         detail::get_or(sys, "alpha", 0.07));
  } else {
    Json tableDoc = sys;
    if (sys.contains("tablePath")) {
      std::string path = sys.at("tablePath").get<std::string>();
      if (!path.empty() && path.front() != '/') path = baseDir + "/" + path;
      tableDoc = load_json(path);
    }
    auto table = detail::get_or<std::vector<std::vector<int>>>(tableDoc, "table", {});
    auto labels = detail::get_or<std::vector<std::string>>(tableDoc, "labels", {});
    auto qStates = detail::get_or<std::vector<int>>(tableDoc, "qStates", {});
    if (table.empty()) throw ConfigError("finite system needs a table");
    if (labels.empty())
      for (std::size_t k = 0; k < table.front().size(); ++k) labels.push_back(std::to_string(k));
    try {
      c.spec = make_table(table, labels, qStates, f);
    } catch (const std::exception& e) {
      throw ConfigError(e.what());
    }
  }
  const Json q = doc.value("Q", Json::object());
  if (c.finite()) {
    c.qStates = detail::get_or<std::vector<int>>(q, "states", c.spec.qStates);
    if (c.qStates.empty()) throw ConfigError("finite system needs Q.states or system.qStates");
  } else {
    c.qlo = detail::get_or(q, "lo", 0.0);
    c.qhi = detail::get_or(q, "hi", 1.0);
    if (!(c.qlo < c.qhi) || c.qhi - c.qlo > 1.0) throw ConfigError("Q needs lo < hi within one period");
  }
  if (doc.contains("W")) {
    const Json& w = doc.at("W");
    c.hasW = true;
    c.wStates = detail::get_or<std::vector<int>>(w, "states", {});
    c.wlo = detail::get_or(w, "lo", c.qlo);
    c.whi = detail::get_or(w, "hi", c.qhi);
  }
  const Json g = doc.value("grid", Json::object());
  c.cells = detail::get_or(g, "cells", 512);
  c.samplesPerCell = detail::get_or(g, "samplesPerCell", 5);
  if (c.cells < 1 || c.samplesPerCell < 1) throw ConfigError("grid cells and samplesPerCell must be positive");
  c.m = detail::get_or(doc.value("quadrature", Json::object()), "m", c.finite() ? 0 : 8);
  if (!c.finite() && c.m < 1) throw ConfigError("quadrature.m must be positive");
  const Json qs = doc.value("qsm", Json::object());
  c.qsm.tol = detail::get_or(qs, "tol", 1e-12);
  c.qsm.maxIter = detail::get_or(qs, "maxIter", 100000);
  if (qs.contains("init") && qs.at("init").is_array()) c.qsm.init = qs.at("init").get<std::vector<double>>();
  if (!(c.qsm.tol > 0.0) || c.qsm.maxIter < 1) throw ConfigError("qsm.tol and qsm.maxIter must be positive");
  const Json p = doc.value("partition", Json::object());
  c.tauList = detail::get_or(p, "tauList", c.tauList);
  c.coarsenessList = detail::get_or(p, "coarsenessList", c.coarsenessList);
  try {
    c.rule = parse_feedback_rule(detail::get_or<std::string>(p, "feedbackRule", "lexicographic"));
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
  for (int t : c.tauList)
    if (t < 1) throw ConfigError("tau values must be positive");
  for (int k : c.coarsenessList)
    if (k < 1) throw ConfigError("coarseness values must be positive");
  if (c.tauList.empty() || c.coarsenessList.empty()) throw ConfigError("tauList and coarsenessList must be nonempty");
  const Json e = doc.value("entropy", Json::object());
  c.nMax = detail::get_or(e, "nMax", 8);
  c.nodeBudget = detail::get_or<std::size_t>(e, "nodeBudget", 200000);
  c.logBase = detail::get_or<std::string>(e, "logBase", "e");
  if (c.nMax < 1) throw ConfigError("entropy.nMax must be positive");
  if (c.logBase != "e" && c.logBase != "2") throw ConfigError("entropy.logBase must be e or 2");
  const Json v = doc.value("verify", Json::object());
  c.equalityTol = detail::get_or(v, "equalityTol", 0.05);
  c.checks = detail::get_or(v, "checks", c.checks);
  c.shift = detail::get_or(v, "shift", 0.25);
  c.perm = detail::get_or<std::vector<int>>(v, "perm", {});
  if (v.contains("K")) {
    c.hasK = true;
    c.kStates = detail::get_or<std::vector<int>>(v.at("K"), "states", {});
    c.klo = detail::get_or(v.at("K"), "lo", c.qlo);
    c.khi = detail::get_or(v.at("K"), "hi", c.qhi);
  }
  c.components = detail::get_or<std::vector<std::vector<int>>>(v, "components", {});
  c.trials = detail::get_or(v, "trials", 10000);
  c.steps = detail::get_or(v, "steps", 50);
  c.outDir = detail::get_or<std::string>(doc.value("output", Json::object()), "dir", "out");
  c.seed = detail::get_or<std::uint64_t>(doc, "seed", 12345);
  return c;
}

inline CellGrid config_grid(const RunConfig& c) {
  if (c.finite()) return build_finite_grid(c.spec, c.qStates);
  return build_grid(c.qlo, c.qhi, c.cells, c.samplesPerCell, true);
}

inline ControlQuadrature config_quadrature(const RunConfig& c) { return control_quadrature(noise_of(c.spec), c.m); }

// Cells of the grid whose centre lies in [lo, hi], or that hold one of the given states.
inline CellSet cells_in(const CellGrid& grid, const std::vector<int>& states, double lo, double hi) {
  CellSet out;
  if (grid.finite()) {
    for (int s : states)
      if (s >= 0 && s < static_cast<int>(grid.cellOfState.size()) && grid.cellOfState[s] >= 0)
        out.push_back(grid.cellOfState[s]);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
  }
  for (int i = 0; i < grid.cellCount; ++i) {
    double mid = 0.5 * (grid.cell_lo(i) + grid.cell_hi(i));
    if (mid >= lo && mid <= hi) out.push_back(i);
  }
  return out;
}

inline CellSet config_w(const RunConfig& c, const CellGrid& grid) {
  if (!c.hasW) return grid.all_cells();
  if (grid.finite() && c.wStates.empty()) return grid.all_cells();
  return cells_in(grid, c.wStates, c.wlo, c.whi);
}

inline EntropyOptions config_entropy(const RunConfig& c) {
  EntropyOptions o;
  o.nMax = c.nMax;
  o.nodeBudget = c.nodeBudget;
  o.rule = c.rule;
  return o;
}

inline KvsQOptions config_kvsq(const RunConfig& c) {
  KvsQOptions o;
  o.tauList = c.tauList;
  o.coarsenessList = c.coarsenessList;
  o.entropy = config_entropy(c);
  o.equalityTol = c.equalityTol;
  return o;
}

}  // namespace qsmlab
