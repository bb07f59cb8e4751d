#pragma once

#include <Eigen/Dense>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "causal_sde/builtins.hpp"
#include "causal_sde/driver.hpp"
#include "causal_sde/errors.hpp"
#include "causal_sde/expression.hpp"
#include "causal_sde/intervention.hpp"
#include "causal_sde/ou.hpp"
#include "causal_sde/system.hpp"

namespace causal_sde {

/// Parsed experiment document. Fields absent from the document keep these
/// defaults; CLI flags override them afterwards.
struct ExperimentConfig {
  SdeSystem system = gbm_system();
  /// Second system for identifiability checks.
  std::optional<SdeSystem> compare;
  std::optional<OuModel> ou;
  std::string builtin;
  double horizon = 1.0;
  double delta = 1.0 / 256.0;
  bool grid_given = false;
  std::size_t n_paths = 100;
  std::uint64_t seed = 1;
  std::optional<InterventionSpec> intervention;
  std::vector<double> times;
  double alpha = 0.01;
  double r_e = 1.0;
  std::vector<VectorXd> points;
  std::vector<double> deltas;
};

namespace config_detail {

using Json = nlohmann::ordered_json;

[[noreturn]] inline void fail(const std::string& where, const std::string& what) {
  throw ConfigError(where + ": " + what);
}

inline const Json& require(const Json& obj, const char* key, const std::string& where) {
  if (!obj.is_object() || !obj.contains(key)) fail(where, std::string("missing field '") + key + "'");
  return obj.at(key);
}

inline double number(const Json& v, const std::string& where) {
  if (!v.is_number()) fail(where, "expected a number");
  return v.get<double>();
}

inline VectorXd vector(const Json& v, const std::string& where) {
  if (!v.is_array()) fail(where, "expected an array of numbers");
  VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) out(static_cast<Eigen::Index>(i)) = number(v[i], where);
  return out;
}

inline MatrixXd matrix(const Json& v, const std::string& where) {
  if (!v.is_array() || v.empty() || !v[0].is_array()) fail(where, "expected an array of rows");
  const std::size_t cols = v[0].size();
  MatrixXd out(static_cast<Eigen::Index>(v.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_array() || v[i].size() != cols) fail(where, "rows must have equal length");
    for (std::size_t j = 0; j < cols; ++j)
      out(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = number(v[i][j], where);
  }
  return out;
}

inline std::map<std::string, double, std::less<>> constants(const Json& sys) {
  std::map<std::string, double, std::less<>> out;
  if (!sys.contains("constants")) return out;
  const Json& c = sys.at("constants");
  if (!c.is_object()) fail("system.constants", "expected an object");
  for (const auto& [k, v] : c.items()) out[k] = number(v, "system.constants." + k);
  return out;
}

inline std::vector<std::string> labels(const Json& sys, std::size_t p) {
  if (!sys.contains("labels")) return default_labels(p);
  const Json& l = sys.at("labels");
  if (!l.is_array() || l.size() != p) fail("system.labels", "expected " + std::to_string(p) + " labels");
  std::vector<std::string> out;
  for (const auto& v : l) {
    if (!v.is_string()) fail("system.labels", "labels must be strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

inline InitialLaw initial(const Json& sys, std::size_t p) {
  if (sys.contains("x0")) {
    VectorXd x0 = vector(sys.at("x0"), "system.x0");
    if (static_cast<std::size_t>(x0.size()) != p) fail("system.x0", "expected " + std::to_string(p) + " entries");
    return x0;
  }
  if (sys.contains("initial")) {
    const Json& init = sys.at("initial");
    GaussianLaw g{vector(require(init, "mean", "system.initial"), "system.initial.mean"),
                  matrix(require(init, "cov", "system.initial"), "system.initial.cov")};
    if (static_cast<std::size_t>(g.mean.size()) != p) fail("system.initial.mean", "wrong dimension");
    return g;
  }
  fail("system", "missing field 'x0' or 'initial'");
}

inline LevyTriplet driver(const Json& v) {
  const std::string where = "driver";
  VectorXd alpha = vector(require(v, "alpha", where), "driver.alpha");
  MatrixXd cov = v.contains("cov") ? matrix(v.at("cov"), "driver.cov")
                                   : MatrixXd::Zero(alpha.size(), alpha.size());
  std::vector<JumpAtom> jumps;
  if (v.contains("jumps")) {
    const Json& j = v.at("jumps");
    if (!j.is_array()) fail("driver.jumps", "expected an array");
    for (const auto& atom : j)
      jumps.push_back({number(require(atom, "rate", "driver.jumps"), "driver.jumps.rate"),
                       vector(require(atom, "location", "driver.jumps"), "driver.jumps.location")});
  }
  const double r = v.contains("trunc_radius") ? number(v.at("trunc_radius"), "driver.trunc_radius") : 1.0;
  try {
    return LevyTriplet(std::move(alpha), std::move(cov), std::move(jumps), r);
  } catch (const std::invalid_argument& e) {
    fail(where, e.what());
  }
}

inline Expression expression(const Json& v, const ParseOptions& opts, const std::string& where) {
  if (v.is_number()) {
    std::ostringstream os;
    os.precision(17);
    os << v.get<double>();
    return parse_expression(os.str(), opts);
  }
  if (!v.is_string()) fail(where, "expected an expression string or number");
  try {
    return parse_expression(v.get<std::string>(), opts);
  } catch (const ParseError& e) {
    fail(where, e.what());
  }
}

inline std::optional<SignatureGraph> declared_signature(const Json& sys, const std::vector<std::string>& labels) {
  if (!sys.contains("signature")) return std::nullopt;
  const Json& edges = sys.at("signature");
  if (!edges.is_array()) fail("system.signature", "expected an array of [from, to] pairs");
  SignatureGraph g(labels.size());
  auto vertex = [&](const Json& v) -> std::size_t {
    if (v.is_string()) {
      for (std::size_t i = 0; i < labels.size(); ++i)
        if (labels[i] == v.get<std::string>()) return i;
      fail("system.signature", "unknown label '" + v.get<std::string>() + "'");
    }
    if (v.is_number_integer() && v.get<long long>() >= 1 && static_cast<std::size_t>(v.get<long long>()) <= labels.size())
      return static_cast<std::size_t>(v.get<long long>() - 1);
    fail("system.signature", "vertices are labels or 1-based indices");
  };
  for (const auto& e : edges) {
    if (!e.is_array() || e.size() != 2) fail("system.signature", "expected [from, to]");
    g.add_edge(vertex(e[0]), vertex(e[1]));
  }
  return g;
}

/// Field from a p×d matrix of expression strings.
inline CoefficientField expression_field(std::vector<Expression> entries, std::size_t p, std::size_t d,
                                         std::string description) {
  FieldFn fn = [entries = std::move(entries)](std::span<const double> x, std::span<double> out) {
    for (std::size_t k = 0; k < entries.size(); ++k) out[k] = entries[k](x);
  };
  return {p, d, std::move(fn), FieldSource::expression, std::move(description)};
}

struct ParsedSystem {
  SdeSystem system;
  std::optional<OuModel> ou;
  std::optional<InterventionSpec> default_intervention;
  std::optional<SdeSystem> companion;
  std::string builtin;
};

inline ParsedSystem system(const Json& sys) {
  const std::string kind = require(sys, "kind", "system").get<std::string>();
  if (kind == "builtin") {
    const std::string name = require(sys, "name", "system").get<std::string>();
    const bool companion = sys.contains("variant") && sys.at("variant") == "companion";
    Builtin b = load_builtin(name);
    if (companion) {
      if (!b.companion) fail("system.variant", "builtin '" + name + "' has no companion");
      return {*b.companion, std::nullopt, b.intervention, b.system, name};
    }
    return {b.system, b.ou, b.intervention, b.companion, name};
  }
  if (kind == "ou") {
    OuModel m;
    m.reversion = matrix(require(sys, "B", "system"), "system.B");
    const auto p = static_cast<std::size_t>(m.reversion.rows());
    m.level = sys.contains("A") ? vector(sys.at("A"), "system.A") : VectorXd::Zero(static_cast<Eigen::Index>(p));
    m.sigma = matrix(require(sys, "sigma", "system"), "system.sigma");
    m.initial = initial(sys, p);
    m.labels = labels(sys, p);
    try {
      m.validate();
      return {ou_to_system(m), m, std::nullopt, std::nullopt, {}};
    } catch (const std::invalid_argument& e) {
      fail("system", e.what());
    }
  }
  ParseOptions opts;
  opts.constants = constants(sys);
  if (kind == "chem") {
    const MatrixXd s = matrix(require(sys, "stoichiometry", "system"), "system.stoichiometry");
    const Json& rates = require(sys, "rates", "system");
    if (!rates.is_array() || static_cast<Eigen::Index>(rates.size()) != s.cols())
      fail("system.rates", "expected one rate per stoichiometry column");
    const auto p = static_cast<std::size_t>(s.rows());
    opts.dimension = p;
    std::vector<Expression> lambda;
    for (const auto& r : rates) lambda.push_back(expression(r, opts, "system.rates"));
    const Eigen::MatrixXi si = s.cast<int>();
    if (si.cast<double>() != s) fail("system.stoichiometry", "entries must be integers");
    VectorXd x0 = vector(require(sys, "x0", "system"), "system.x0");
    if (static_cast<std::size_t>(x0.size()) != p) fail("system.x0", "wrong dimension");
    return {build_chem_system(si, std::move(lambda), std::move(x0), labels(sys, p)), std::nullopt, std::nullopt,
            std::nullopt, {}};
  }
  if (kind == "expression") {
    std::vector<Expression> entries;
    std::size_t p = 0, d = 0;
    std::optional<LevyTriplet> z;
    if (sys.contains("coefficients")) {
      const Json& rows = sys.at("coefficients");
      if (!rows.is_array() || rows.empty() || !rows[0].is_array()) fail("system.coefficients", "expected rows");
      p = rows.size();
      d = rows[0].size();
      opts.dimension = p;
      for (const auto& row : rows) {
        if (!row.is_array() || row.size() != d) fail("system.coefficients", "rows must have equal length");
        for (const auto& e : row) entries.push_back(expression(e, opts, "system.coefficients"));
      }
      z = driver(require(sys, "driver", "system"));
    } else {
      // Drift and diffusion: canonical encoding with time as driver coordinate 0.
      const Json& drift = require(sys, "drift", "system");
      if (!drift.is_array() || drift.empty()) fail("system.drift", "expected an array of expressions");
      p = drift.size();
      opts.dimension = p;
      std::size_t q = 0;
      const Json* diffusion = sys.contains("diffusion") ? &sys.at("diffusion") : nullptr;
      if (diffusion) {
        if (!diffusion->is_array() || diffusion->size() != p) fail("system.diffusion", "expected one row per drift entry");
        q = (*diffusion)[0].size();
      }
      if (q == 0) fail("system.diffusion", "expected at least one Brownian column");
      d = q + 1;
      for (std::size_t i = 0; i < p; ++i) {
        entries.push_back(expression(drift[i], opts, "system.drift"));
        const Json& row = (*diffusion)[i];
        if (!row.is_array() || row.size() != q) fail("system.diffusion", "rows must have equal length");
        for (const auto& e : row) entries.push_back(expression(e, opts, "system.diffusion"));
      }
      z = LevyTriplet::time_and_brownian(static_cast<Eigen::Index>(q));
    }
    if (static_cast<Eigen::Index>(d) != z->dim()) fail("system", "coefficient columns do not match driver dimension");
    const auto lab = labels(sys, p);
    CoefficientField field = expression_field(std::move(entries), p, d, "expression matrix");
    if (auto sig = declared_signature(sys, lab)) field.declare_dependence(std::move(*sig));
    if (sys.contains("probe_box")) {
      const VectorXd box = vector(sys.at("probe_box"), "system.probe_box");
      if (box.size() != 2 || !(box(0) < box(1))) fail("system.probe_box", "expected [lo, hi] with lo < hi");
      field.set_probe_box({box(0), box(1)});
    }
    return {SdeSystem(std::move(field), *z, initial(sys, p), lab), std::nullopt, std::nullopt, std::nullopt, {}};
  }
  fail("system.kind", "unknown kind '" + kind + "' (expected ou, chem, expression or builtin)");
}

inline std::size_t resolve_target(const std::string& target, const SdeSystem& sys) {
  for (std::size_t i = 0; i < sys.labels().size(); ++i)
    if (sys.labels()[i] == target) return i;
  auto index_suffix = [&](char prefix) -> std::optional<std::size_t> {
    if (target.size() < 2 || target[0] != prefix) return std::nullopt;
    std::size_t k = 0;
    const auto res = std::from_chars(target.data() + 1, target.data() + target.size(), k);
    if (res.ec != std::errc{} || res.ptr != target.data() + target.size() || k == 0) return std::nullopt;
    return k - 1;
  };
  if (index_suffix('Z')) throw IntegratorInterventionError();
  if (auto k = index_suffix('x'); k && *k < sys.p()) return *k;
  fail("intervention.target", "unknown coordinate '" + target + "'");
}

inline InterventionSpec intervention(const Json& v, const SdeSystem& sys,
                                     const std::map<std::string, double, std::less<>>& consts) {
  const Json& target = require(v, "target", "intervention");
  if (!target.is_string()) fail("intervention.target", "expected a coordinate label");
  const std::size_t m = resolve_target(target.get<std::string>(), sys);
  const Json& value = require(v, "value", "intervention");
  if (value.is_number()) return InterventionSpec::on_state(m, ZetaLaw::constant(value.get<double>()));
  ParseOptions opts;
  opts.dimension = sys.p();
  opts.constants = consts;
  const Expression e = expression(value, opts, "intervention.value");
  return InterventionSpec::on_state(m, ZetaLaw::from_expression(e, sys.p(), m));
}

}  // namespace config_detail

inline ExperimentConfig parse_config(const nlohmann::ordered_json& doc) {
  namespace cd = config_detail;
  if (!doc.is_object()) throw ConfigError("config: expected a JSON object");
  ExperimentConfig cfg;
  const auto& sys_json = cd::require(doc, "system", "config");
  auto parsed = cd::system(sys_json);
  cfg.system = parsed.system;
  cfg.ou = parsed.ou;
  cfg.builtin = parsed.builtin;
  cfg.intervention = parsed.default_intervention;
  cfg.compare = parsed.companion;
  if (doc.contains("compare_system")) cfg.compare = cd::system(doc.at("compare_system")).system;
  if (doc.contains("grid")) {
    const auto& g = doc.at("grid");
    if (g.contains("horizon")) cfg.horizon = cd::number(g.at("horizon"), "grid.horizon");
    if (g.contains("delta")) cfg.delta = cd::number(g.at("delta"), "grid.delta");
    cfg.grid_given = true;
  }
  if (doc.contains("n_paths")) {
    if (!doc.at("n_paths").is_number_unsigned()) throw ConfigError("n_paths: expected a positive integer");
    cfg.n_paths = doc.at("n_paths").get<std::size_t>();
  }
  if (doc.contains("seed")) {
    if (!doc.at("seed").is_number_unsigned()) throw ConfigError("seed: expected a nonnegative integer");
    cfg.seed = doc.at("seed").get<std::uint64_t>();
  }
  if (doc.contains("intervention"))
    cfg.intervention = cd::intervention(doc.at("intervention"), cfg.system,
                                        sys_json.contains("constants") ? cd::constants(sys_json)
                                                                       : std::map<std::string, double, std::less<>>{});
  if (doc.contains("test")) {
    const auto& t = doc.at("test");
    if (t.contains("times")) {
      const VectorXd times = cd::vector(t.at("times"), "test.times");
      cfg.times.assign(times.data(), times.data() + times.size());
    }
    if (t.contains("alpha")) cfg.alpha = cd::number(t.at("alpha"), "test.alpha");
  }
  if (doc.contains("generator")) {
    const auto& g = doc.at("generator");
    if (g.contains("r_E")) cfg.r_e = cd::number(g.at("r_E"), "generator.r_E");
    if (g.contains("points")) {
      const auto& pts = g.at("points");
      if (!pts.is_array()) throw ConfigError("generator.points: expected an array of points");
      for (const auto& pt : pts) {
        VectorXd x = cd::vector(pt, "generator.points");
        if (static_cast<std::size_t>(x.size()) != cfg.system.p()) throw ConfigError("generator.points: wrong dimension");
        cfg.points.push_back(std::move(x));
      }
    }
  }
  if (doc.contains("convergence")) {
    const auto& c = doc.at("convergence");
    if (c.contains("deltas")) {
      const VectorXd d = cd::vector(c.at("deltas"), "convergence.deltas");
      cfg.deltas.assign(d.data(), d.data() + d.size());
    }
  }
  return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  nlohmann::ordered_json doc;
  try {
    doc = nlohmann::ordered_json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(doc);
}

}  // namespace causal_sde
