#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "controlsets.hpp"
#include "entropy.hpp"
#include "verify.hpp"

namespace qsmlab {

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    throw std::runtime_error("missing CSV column '" + name + "'");
  }
};

inline std::string fmt(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

inline double parse_double(const std::string& s) {
  if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  return std::stod(s);
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

inline std::string join_ints(const std::vector<int>& v, char sep = '-') {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += sep;
    s += std::to_string(v[i]);
  }
  return s;
}

inline std::vector<int> parse_ints(const std::string& s, char sep = '-') {
  std::vector<int> v;
  if (s.empty()) return v;
  for (const auto& t : split(s, sep)) v.push_back(std::stoi(t));
  return v;
}

inline void write_csv(const std::string& path, const CsvTable& t) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  auto line = [&](const std::vector<std::string>& r) {
    for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
    out << '\n';
  };
  line(t.header);
  for (const auto& r : t.rows) line(r);
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) return t;
  t.header = split(line, ',');
  while (std::getline(in, line))
    if (!line.empty()) t.rows.push_back(split(line, ','));
  return t;
}

inline CsvTable qsm_table(const CellGrid& grid, const QuasiStationaryMeasure& q) {
  CsvTable t{{"cell", "lo", "hi", "eta"}, {}};
  for (int i = 0; i < grid.cellCount; ++i)
    t.rows.push_back({std::to_string(i), fmt(grid.cell_lo(i)), fmt(grid.cell_hi(i)), fmt(q.eta[i])});
  return t;
}

inline std::vector<double> eta_from_table(const CsvTable& t) {
  std::vector<double> eta;
  const int c = t.column("eta");
  for (const auto& r : t.rows) eta.push_back(parse_double(r[c]));
  return eta;
}

inline CsvTable controlsets_table(const CellGrid& grid, const ControlSetAnalysis& a) {
  CsvTable t{{"set", "cell", "lo", "hi", "invariant", "transitivity"}, {}};
  for (std::size_t s = 0; s < a.sets.size(); ++s)
    for (int c : a.sets[s].cells)
      t.rows.push_back({std::to_string(s), std::to_string(c), fmt(grid.cell_lo(c)), fmt(grid.cell_hi(c)),
                        a.sets[s].invariant ? "1" : "0", contains(a.sets[s].transitivityCells, c) ? "1" : "0"});
  return t;
}

// Sets with cells and invariance flags recovered from controlsets.csv.
inline std::vector<std::pair<CellSet, bool>> controlsets_from_table(const CsvTable& t) {
  std::vector<std::pair<CellSet, bool>> out;
  const int s = t.column("set"), c = t.column("cell"), inv = t.column("invariant");
  for (const auto& r : t.rows) {
    std::size_t idx = std::stoul(r[s]);
    if (out.size() <= idx) out.resize(idx + 1);
    out[idx].first.push_back(std::stoi(r[c]));
    out[idx].second = r[inv] == "1";
  }
  return out;
}

struct WordRow {
  int tau = 1;
  int coarseness = 1;
  int depth = 0;
  std::vector<int> word;
  double mass = 0.0;
  double scaledMass = 0.0;
};

inline void append_words(CsvTable& t, const WordTree& tree, int coarseness) {
  if (t.header.empty()) t.header = {"tau", "coarseness", "depth", "word", "mass", "scaled_mass"};
  for (int d = 1; d <= tree.depth(); ++d)
    for (int i = 0; i < static_cast<int>(tree.levels[d - 1].size()); ++i) {
      double m = tree.levels[d - 1][i].mass;
      t.rows.push_back({std::to_string(tree.tau), std::to_string(coarseness), std::to_string(d),
                        join_ints(tree.word(d, i)), fmt(m), fmt(tree.scale(d) * m)});
    }
}

inline std::vector<WordRow> words_from_table(const CsvTable& t) {
  std::vector<WordRow> out;
  const int a = t.column("tau"), b = t.column("coarseness"), d = t.column("depth"), w = t.column("word"),
            m = t.column("mass"), s = t.column("scaled_mass");
  for (const auto& r : t.rows)
    out.push_back({std::stoi(r[a]), std::stoi(r[b]), std::stoi(r[d]), parse_ints(r[w]), parse_double(r[m]),
                   parse_double(r[s])});
  return out;
}

// Entropies in the requested unit: natural log, or bits when base2.
inline void append_entropy(CsvTable& t, const PartitionRun& run, bool base2) {
  if (t.header.empty())
    t.header = {"tau", "coarseness", "n", "H", "H_over_ntau", "H_inc", "H_inc_over_ntau", "W_n", "log_W_n"};
  const double u = base2 ? 1.0 / std::log(2.0) : 1.0;
  for (std::size_t n = 1; n <= run.metric.H.size(); ++n) {
    double wn = n <= run.topo.counts.size() ? run.topo.counts[n - 1] : std::numeric_limits<double>::quiet_NaN();
    double hi = n <= run.incremental.H.size() ? run.incremental.H[n - 1] : std::numeric_limits<double>::quiet_NaN();
    double ri = n <= run.incremental.rate.size() ? run.incremental.rate[n - 1]
                                                 : std::numeric_limits<double>::quiet_NaN();
    t.rows.push_back({std::to_string(run.tau), std::to_string(run.coarseness), std::to_string(n),
                      fmt(u * run.metric.H[n - 1]), fmt(u * run.metric.rate[n - 1]), fmt(u * hi), fmt(u * ri),
                      fmt(wn), fmt(u * std::log(wn))});
  }
  if (!run.feasible)
    t.rows.push_back({std::to_string(run.tau), std::to_string(run.coarseness), "0", "inf", "inf", "inf", "inf",
                      "0", "-inf"});
}

inline void append_partition(CsvTable& parts, CsvTable& feedback, const InvariantPartition& p, int coarseness,
                             const ControlQuadrature& quad) {
  if (parts.header.empty()) parts.header = {"tau", "coarseness", "element", "cell"};
  if (feedback.header.empty()) feedback.header = {"tau", "coarseness", "element", "word", "labels"};
  for (int e = 0; e < p.size(); ++e) {
    for (int c : p.elements[e])
      parts.rows.push_back({std::to_string(p.tau), std::to_string(coarseness), std::to_string(e), std::to_string(c)});
    std::string labels;
    for (std::size_t k = 0; k < p.feedback[e].size(); ++k) labels += (k ? " " : "") + quad.label(p.feedback[e][k]);
    feedback.rows.push_back(
        {std::to_string(p.tau), std::to_string(coarseness), std::to_string(e), join_ints(p.feedback[e]), labels});
  }
}

inline CsvTable ulam_table(const UlamOperator& u) {
  CsvTable t{{"row", "col", "value"}, {}};
  for (int i = 0; i < u.P.rows; ++i)
    for (int p = u.P.rowPtr[i]; p < u.P.rowPtr[i + 1]; ++p)
      t.rows.push_back({std::to_string(i), std::to_string(u.P.colIdx[p]), fmt(u.P.values[p])});
  return t;
}

inline SparseMatrix ulam_from_table(const CsvTable& t, int n) {
  std::vector<std::vector<std::pair<int, double>>> rows(n);
  const int r = t.column("row"), c = t.column("col"), v = t.column("value");
  for (const auto& row : t.rows) rows[std::stoi(row[r])].push_back({std::stoi(row[c]), parse_double(row[v])});
  return SparseMatrix::from_rows(n, rows);
}

inline CsvTable symbolic_table(const SymbolicImage& g) {
  CsvTable t{{"src", "dst", "nodes"}, {}};
  for (int i : g.wCells)
    for (const auto& e : g.out[i]) t.rows.push_back({std::to_string(i), std::to_string(e.dst), join_ints(e.labels)});
  return t;
}

inline nlohmann::json report_json(const TheoremReport& r) {
  nlohmann::json j;
  j["id"] = r.id;
  j["verdict"] = verdict_name(r.verdict);
  j["tolerance"] = r.tolerance;
  j["reason"] = r.reason;
  nlohmann::json q = nlohmann::json::object();
  for (const auto& [k, v] : r.quantities) q[k] = std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(fmt(v));
  j["quantities"] = q;
  j["assumed"] = r.assumed;
  j["notes"] = r.notes;
  j["artifacts"] = r.artifacts;
  return j;
}

inline nlohmann::json number_json(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(fmt(v)); }

inline void write_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << j.dump(2) << '\n';
}

}  // namespace qsmlab
