#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <system_error>
#include <vector>

#include "json.hpp"

#include "causal_sde/euler.hpp"
#include "causal_sde/generator.hpp"
#include "causal_sde/ito.hpp"
#include "causal_sde/ou.hpp"
#include "causal_sde/stats.hpp"
#include "causal_sde/system.hpp"

namespace causal_sde {

using Json = nlohmann::ordered_json;

/// Shortest decimal that parses back to the same double; "nan"/"inf"/"-inf"
/// for non-finite values.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, res.ptr};
}

inline double parse_double(std::string_view s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw std::runtime_error("malformed number '" + std::string(s) + "'");
  return v;
}

/// Long-format CSV: header path,t,<labels>, one row per path and stored time.
inline void write_csv(std::ostream& os, const PathEnsemble& e) {
  os << "path,t";
  for (const auto& l : e.labels) os << ',' << l;
  os << '\n';
  for (std::size_t path = 0; path < e.n_paths; ++path)
    for (std::size_t s = 0; s < e.slots(); ++s) {
      os << path << ',' << format_double(e.grid.time(e.stored_steps[s]));
      for (std::size_t c = 0; c < e.p(); ++c) os << ',' << format_double(e.at(path, s, c));
      os << '\n';
    }
}

struct CsvTable {
  std::vector<std::string> labels;
  std::vector<std::size_t> path;
  std::vector<double> t;
  /// Row-major, labels.size() values per row.
  std::vector<double> values;
};

inline CsvTable read_csv(std::istream& is) {
  CsvTable table;
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("empty CSV");
  std::vector<std::string> header;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) header.push_back(cell);
  }
  if (header.size() < 2 || header[0] != "path" || header[1] != "t") throw std::runtime_error("CSV header must start with path,t");
  table.labels.assign(header.begin() + 2, header.end());
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (cells.size() != header.size()) throw std::runtime_error("CSV row has wrong number of fields");
    table.path.push_back(static_cast<std::size_t>(std::stoull(cells[0])));
    table.t.push_back(parse_double(cells[1]));
    for (std::size_t c = 2; c < cells.size(); ++c) table.values.push_back(parse_double(cells[c]));
  }
  return table;
}

inline Json to_json(double v) {
  if (!std::isfinite(v)) return nullptr;
  return v;
}

inline Json to_json(const VectorXd& v) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(to_json(v(i)));
  return out;
}

inline Json to_json(const MatrixXd& m) {
  Json out = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(to_json(VectorXd(m.row(i).transpose())));
  return out;
}

inline Json to_json(const SignatureGraph& g, const std::vector<std::string>& labels) {
  Json edges = Json::array();
  for (auto [i, j] : g.edges()) edges.push_back({labels.at(i), labels.at(j)});
  return Json{{"vertices", labels}, {"edges", edges}, {"edge_count", g.edge_count()}};
}

inline Json to_json(const TestReport& r) {
  Json entries = Json::array();
  for (const auto& e : r.entries)
    entries.push_back({{"test", e.test},
                       {"coordinate", e.coordinate},
                       {"times", e.times},
                       {"statistic", to_json(e.statistic)},
                       {"p_value", to_json(e.p_value)},
                       {"corrected_alpha", e.corrected_alpha},
                       {"rejected", e.rejected}});
  return Json{{"test", r.test},
              {"statistic", to_json(r.statistic)},
              {"p_value", r.p_value ? to_json(*r.p_value) : Json(nullptr)},
              {"alpha", r.alpha},
              {"corrected_alpha", r.corrected_alpha},
              {"correction", r.correction},
              {"verdict", r.verdict},
              {"hypothesis", r.hypothesis},
              {"n_paths", r.n_paths},
              {"exploded_a", r.exploded_a},
              {"exploded_b", r.exploded_b},
              {"entries", entries}};
}

inline Json to_json(const CommutationReport& r) {
  return Json{{"max_abs_diff", to_json(r.max_abs_diff)},
              {"tol", r.tol},
              {"n_paths", r.n_paths},
              {"compared_values", r.compared_values},
              {"exploded_paths", r.exploded_paths},
              {"finiteness_mismatches", r.finiteness_mismatches},
              {"verdict", r.passed ? "pass" : "fail"}};
}

inline Json to_json(const ItoReport& r) {
  return Json{{"zeta", r.zeta},
              {"horizon", r.horizon},
              {"delta", r.delta},
              {"n_paths", r.n_paths},
              {"max_dist_closed_form", to_json(r.max_dist_closed_form)},
              {"max_dist_constant", to_json(r.max_dist_constant)},
              {"dist_constant_at_t0", to_json(r.dist_constant_at_t0)},
              {"median_dist_constant_at_horizon", to_json(r.median_dist_constant_at_horizon)},
              {"contradiction", r.contradiction}};
}

inline Json to_json(const GeneratorTerms& t) {
  Json atoms = Json::array();
  for (const auto& a : t.atoms) atoms.push_back({{"rate", a.rate}, {"location", to_json(a.location)}});
  return Json{{"x", to_json(t.x)},
              {"beta", to_json(t.beta)},
              {"diffusion", to_json(t.diffusion)},
              {"jump_atoms", atoms},
              {"r_D", t.r_d},
              {"r_E", t.r_e}};
}

inline Json to_json(const GaussianLaw& g) { return Json{{"mean", to_json(g.mean)}, {"cov", to_json(g.cov)}}; }

inline void write_convergence_csv(std::ostream& os, const ConvergenceTable& t) {
  os << "delta,rms_sup_error\n";
  for (const auto& r : t.rows) os << format_double(r.delta) << ',' << format_double(r.rms_sup_error) << '\n';
}

inline Json to_json(const ConvergenceTable& t) {
  Json rows = Json::array();
  for (const auto& r : t.rows) rows.push_back({{"delta", r.delta}, {"rms_sup_error", to_json(r.rms_sup_error)}});
  return Json{{"rows", rows},
              {"slope", t.slope ? to_json(*t.slope) : Json(nullptr)},
              {"monotone", t.monotone},
              {"n_paths", t.n_paths},
              {"exploded_paths", t.exploded_paths},
              {"reference", t.exact_reference ? "exact" : "finest grid"}};
}

}  // namespace causal_sde
