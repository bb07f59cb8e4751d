#pragma once

#include <cmath>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "causal_sde/builtins.hpp"
#include "causal_sde/config.hpp"
#include "causal_sde/euler.hpp"
#include "causal_sde/generator.hpp"
#include "causal_sde/identifiability.hpp"
#include "causal_sde/intervention.hpp"
#include "causal_sde/io.hpp"
#include "causal_sde/ito.hpp"
#include "causal_sde/ou.hpp"
#include "causal_sde/ou_check.hpp"
#include "causal_sde/system.hpp"

namespace causal_sde::cli {

enum ExitCode : int { kOk = 0, kConfigError = 1, kRuntimeError = 2, kVerdictFailure = 3 };

struct Flags {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> paths;
  std::optional<double> delta;
  std::optional<double> horizon;
  std::optional<double> alpha;
};

namespace detail {

class Output {
 public:
  Output(std::string dir, std::ostream& console) : dir_(std::move(dir)), console_(console) {
    if (!dir_.empty()) std::filesystem::create_directories(dir_);
  }

  /// Writes content to <dir>/name, or to the console when no directory was given.
  void emit(const std::string& name, const std::string& content) {
    if (dir_.empty()) {
      console_ << content;
      if (!content.empty() && content.back() != '\n') console_ << '\n';
      return;
    }
    const auto path = std::filesystem::path(dir_) / name;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write '" + path.string() + "'");
    f << content;
    if (!f) throw std::runtime_error("error writing '" + path.string() + "'");
    console_ << "wrote " << path.string() << '\n';
  }

  std::ostream& console() { return console_; }

 private:
  std::string dir_;
  std::ostream& console_;
};

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline void apply_overrides(ExperimentConfig& cfg, const Flags& f) {
  if (f.seed) cfg.seed = *f.seed;
  if (f.paths) cfg.n_paths = *f.paths;
  if (f.delta) {
    cfg.delta = *f.delta;
    cfg.grid_given = true;
  }
  if (f.horizon) {
    cfg.horizon = *f.horizon;
    cfg.grid_given = true;
  }
  if (f.alpha) cfg.alpha = *f.alpha;
}

inline const InterventionSpec& require_intervention(const ExperimentConfig& cfg) {
  if (!cfg.intervention) throw ConfigError("this command needs an 'intervention' entry");
  return *cfg.intervention;
}

inline std::string edge_list(const SignatureGraph& g, const std::vector<std::string>& labels) {
  std::ostringstream os;
  for (auto [i, j] : g.edges()) os << labels[i] << " -> " << labels[j] << '\n';
  return os.str();
}

inline std::string describe(const SdeSystem& s) {
  std::ostringstream os;
  os << "dimension " << s.p() << ", driver dimension " << s.d() << "\nlabels:";
  for (const auto& l : s.labels()) os << ' ' << l;
  os << "\ncoefficient: " << s.coeff().description() << '\n';
  if (const auto* x = std::get_if<VectorXd>(&s.initial())) {
    os << "initial:";
    for (Eigen::Index i = 0; i < x->size(); ++i) os << ' ' << format_double((*x)(i));
    os << '\n';
  } else {
    os << "initial: Gaussian\n";
  }
  return os.str();
}

inline std::vector<VectorXd> generator_points(const ExperimentConfig& cfg) {
  if (!cfg.points.empty()) return cfg.points;
  ProbeOptions probe;
  probe.n_points = 5;
  return probe_points(cfg.system.coeff(), probe);
}

inline Json generator_json(const SdeSystem& system, const std::vector<VectorXd>& points, double r_e) {
  const ProbeBox box = system.coeff().probe_box().value_or(ProbeBox{});
  const auto fields = test_field_battery(system.p(), 5, box);
  Json entries = Json::array();
  for (const auto& x : points) {
    const auto terms = compute_terms(system, x, r_e);
    Json values = Json::array();
    for (std::size_t k = 0; k < fields.size(); ++k)
      values.push_back({{"field", k},
                        {"d_based", to_json(apply_generator(terms, fields[k], GeneratorForm::d_based))},
                        {"e_based", to_json(apply_generator(terms, fields[k], GeneratorForm::e_based))}});
    Json e = to_json(terms);
    e["values"] = values;
    entries.push_back(e);
  }
  return Json{{"labels", system.labels()}, {"r_E", r_e}, {"points", entries}};
}

inline std::vector<double> default_deltas() {
  std::vector<double> out;
  for (int k = 4; k <= 9; ++k) out.push_back(std::ldexp(1.0, -k));
  return out;
}

/// Exact GBM solution X_t = x0 exp(W_t − t/2).
inline ExactOracle gbm_oracle() {
  return [](double t, const VectorXd& z, const VectorXd& x0) -> VectorXd {
    return x0 * std::exp(z(0) - 0.5 * t);
  };
}

inline int cmd_simulate(const ExperimentConfig& cfg, Output& out) {
  const auto ens = simulate(cfg.system, Grid(cfg.horizon, cfg.delta), cfg.n_paths, cfg.seed);
  std::ostringstream os;
  write_csv(os, ens);
  out.emit("paths.csv", os.str());
  if (ens.exploded_count() > 0) out.console() << "exploded paths: " << ens.exploded_count() << '\n';
  return kOk;
}

inline int cmd_intervene(const ExperimentConfig& cfg, Output& out) {
  const auto& spec = require_intervention(cfg);
  const SdeSystem post = intervene_sde(cfg.system, spec);
  auto& os = out.console();
  os << "intervention: " << cfg.system.labels()[spec.target] << " := " << spec.zeta.source() << '\n';
  os << describe(post);
  os << "signature:\n" << edge_list(resolve_signature(post), post.labels());
  if (cfg.grid_given) {
    const auto ens = simulate(post, Grid(cfg.horizon, cfg.delta), cfg.n_paths, cfg.seed);
    std::ostringstream csv;
    write_csv(csv, ens);
    out.emit("paths.csv", csv.str());
  }
  return kOk;
}

inline int cmd_signature(const ExperimentConfig& cfg, Output& out) {
  const auto sig = resolve_signature(cfg.system);
  out.console() << edge_list(sig, cfg.system.labels());
  out.emit("signature.dot", sig.to_dot(cfg.system.labels()));
  return kOk;
}

inline int cmd_generator(const ExperimentConfig& cfg, Output& out) {
  out.emit("generator.json", dump(generator_json(cfg.system, generator_points(cfg), cfg.r_e)));
  return kOk;
}

inline int cmd_check_commute(const ExperimentConfig& cfg, Output& out) {
  const auto report =
      check_commutation(cfg.system, require_intervention(cfg), Grid(cfg.horizon, cfg.delta), cfg.n_paths, cfg.seed);
  out.emit("commutation.json", dump(to_json(report)));
  return report.passed ? kOk : kVerdictFailure;
}

inline int cmd_check_identify(const ExperimentConfig& cfg, Output& out) {
  if (!cfg.compare) throw ConfigError("check-identify needs 'compare_system' or a builtin with a companion");
  std::vector<double> times = cfg.times;
  if (times.empty()) times = {0.5 * cfg.horizon, cfg.horizon};
  const auto report = identifiability_check(cfg.system, *cfg.compare, require_intervention(cfg), times, cfg.n_paths,
                                            cfg.delta, cfg.seed, cfg.alpha);
  out.emit("identifiability.json", dump(to_json(report)));
  return report.consistent() ? kOk : kVerdictFailure;
}

inline int cmd_convergence(const ExperimentConfig& cfg, Output& out) {
  std::optional<ExactOracle> exact;
  if (cfg.builtin == "gbm") exact = gbm_oracle();
  const auto deltas = cfg.deltas.empty() ? default_deltas() : cfg.deltas;
  const auto table = convergence_study(cfg.system, exact, deltas, cfg.horizon, cfg.n_paths, cfg.seed);
  std::ostringstream os;
  write_convergence_csv(os, table);
  out.emit("convergence.csv", os.str());
  if (table.slope) out.console() << "slope " << format_double(*table.slope) << '\n';
  out.console() << "monotone " << (table.monotone ? "yes" : "no") << '\n';
  return kOk;
}

inline int demo_chem(const Flags& f, Output& out) {
  const Builtin b = load_builtin("chem");
  const auto sig = resolve_signature(b.system);
  const SdeSystem post = intervene_sde(b.system, *b.intervention);
  const auto commutation = check_commutation(b.system, *b.intervention, Grid(f.horizon.value_or(1.0), f.delta.value_or(1.0 / 256.0)),
                                             f.paths.value_or(100), f.seed.value_or(1));
  out.console() << "signature (" << sig.edge_count() << " edges):\n" << edge_list(sig, b.system.labels());
  out.emit("signature.dot", sig.to_dot(b.system.labels()));
  Json j{{"builtin", "chem"},
         {"signature", to_json(sig, b.system.labels())},
         {"intervention", "Y := 1"},
         {"postintervention_signature", to_json(resolve_signature(post), post.labels())},
         {"commutation", to_json(commutation)}};
  out.emit("commutation.json", dump(j));
  return commutation.passed ? kOk : kVerdictFailure;
}

inline int demo_ou(const Flags& f, Output& out) {
  const OuModel model = default_ou_model();
  const double t = f.horizon.value_or(1.0);
  const auto r = ou_moment_check(model, 0, 2.0, t, f.delta.value_or(1e-3), f.paths.value_or(10000), f.seed.value_or(1));
  const OuModel reduced = ou_intervene(model, 0, 2.0);
  Json j{{"builtin", "ou"},
         {"intervention", "x1 := 2"},
         {"reduced_level", to_json(reduced.level)},
         {"reduced_reversion", to_json(reduced.reversion)},
         {"horizon", t},
         {"closed_form", to_json(r.closed_form)},
         {"empirical", to_json(r.empirical)},
         {"max_mean_z", to_json(r.max_mean_z)},
         {"max_cov_ratio", to_json(r.max_cov_ratio)},
         {"n_paths", r.used_paths},
         {"verdict", r.passed ? "pass" : "fail"}};
  out.emit("ou.json", dump(j));
  return r.passed ? kOk : kVerdictFailure;
}

inline int demo_two_signatures(const Flags& f, Output& out) {
  const Builtin b = load_builtin("two-signatures");
  const auto& a = b.system;
  const auto& c = *b.companion;
  out.console() << "signature a:\n" << edge_list(resolve_signature(a), a.labels());
  out.console() << "signature a~:\n" << edge_list(resolve_signature(c), c.labels());
  ProbeOptions probe;
  probe.n_points = 1000;
  const auto cmp = compare_generators(a, c, probe_points(a.coeff(), probe),
                                      test_field_battery(2, 5, ProbeBox{}), 1.0);
  out.console() << "max |a a^T - a~ a~^T| = " << format_double(cmp.max_diffusion_diff) << '\n';
  const auto report = identifiability_check(a, c, *b.intervention, {0.5, 1.0}, f.paths.value_or(10000),
                                            f.delta.value_or(1e-3), f.seed.value_or(1), f.alpha.value_or(0.01));
  out.emit("identifiability.json", dump(to_json(report)));
  return report.consistent() ? kOk : kVerdictFailure;
}

inline int demo_ito(const Flags& f, Output& out) {
  const auto r = ito_counterexample(square_function(), 1.0, f.horizon.value_or(1.0), f.delta.value_or(1.0 / 256.0),
                                    f.paths.value_or(100), f.seed.value_or(1));
  out.emit("ito.json", dump(to_json(r)));
  return r.max_dist_closed_form <= 1e-12 && r.contradiction ? kOk : kVerdictFailure;
}

}  // namespace detail

/// Parses argv and dispatches. Exit codes: 0 success, 1 configuration error,
/// 2 runtime error, 3 failed check verdict.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Simulation and intervention toolkit for Lévy-driven SDEs", "causal_sde"};
  app.require_subcommand(1);
  app.fallthrough();
  Flags f;
  app.add_option("--config", f.config, "experiment configuration (JSON)");
  app.add_option("--out", f.out, "output directory; files go to stdout when absent");
  app.add_option("--seed", f.seed, "random seed");
  app.add_option("--paths", f.paths, "number of paths")->check(CLI::PositiveNumber);
  app.add_option("--delta", f.delta, "Euler step size")->check(CLI::PositiveNumber);
  app.add_option("--horizon", f.horizon, "time horizon")->check(CLI::PositiveNumber);
  app.add_option("--alpha", f.alpha, "test level")->check(CLI::Range(0.0, 1.0));

  using Handler = int (*)(const ExperimentConfig&, detail::Output&);
  const std::vector<std::tuple<std::string, std::string, Handler>> commands = {
      {"simulate", "simulate paths and write paths.csv", detail::cmd_simulate},
      {"intervene", "print the intervened system; simulate it when a grid is given", detail::cmd_intervene},
      {"signature", "print the signature edge list and write signature.dot", detail::cmd_signature},
      {"generator", "generator terms and values at probe points (generator.json)", detail::cmd_generator},
      {"check-commute", "compare intervened Euler SEM with Euler of the intervened SDE", detail::cmd_check_commute},
      {"check-identify", "test equality of postintervention laws of two systems", detail::cmd_check_identify},
      {"convergence", "strong error of the Euler scheme on nested grids (convergence.csv)", detail::cmd_convergence},
  };
  std::vector<CLI::App*> subs;
  for (const auto& [name, help, handler] : commands) subs.push_back(app.add_subcommand(name, help));
  std::string demo_name;
  CLI::App* demo = app.add_subcommand("demo", "run a builtin example end to end");
  demo->add_option("name", demo_name, "chem, ou, two-signatures or ito-counterexample")
      ->required()
      ->check(CLI::IsMember({"chem", "ou", "two-signatures", "ito-counterexample"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kConfigError;
  }

  try {
    detail::Output output(f.out, out);
    if (demo->parsed()) {
      if (demo_name == "chem") return detail::demo_chem(f, output);
      if (demo_name == "ou") return detail::demo_ou(f, output);
      if (demo_name == "two-signatures") return detail::demo_two_signatures(f, output);
      return detail::demo_ito(f, output);
    }

    ExperimentConfig cfg;
    try {
      if (f.config.empty()) throw ConfigError("--config is required");
      cfg = load_config(f.config);
      detail::apply_overrides(cfg, f);
      (void)Grid(cfg.horizon, cfg.delta);
    } catch (const std::exception& e) {
      err << "config error: " << e.what() << '\n';
      return kConfigError;
    }
    for (std::size_t i = 0; i < subs.size(); ++i)
      if (subs[i]->parsed()) return std::get<2>(commands[i])(cfg, output);
    return kConfigError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}

}  // namespace causal_sde::cli
