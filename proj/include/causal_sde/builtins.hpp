#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "causal_sde/driver.hpp"
#include "causal_sde/errors.hpp"
#include "causal_sde/intervention.hpp"
#include "causal_sde/ito.hpp"
#include "causal_sde/ou.hpp"
#include "causal_sde/system.hpp"

namespace causal_sde {

struct ChemParams {
  double a = 1.0;
  double b11 = 0.5;
  double b12 = 0.5;
  double b22 = 0.5;
};

/// Two-species network: influx of y, conversion y → x, degradation of both.
/// Drift (0, a) + B(x, y) with B = [[−b11, b12], [−b12, −b22]] and diffusion
/// Σ(x, y) = [[0, √(b12 y), −√(b11 x), 0], [√a, −√(b12 y), 0, −√(b22 y)]],
/// driven by time and four Brownian motions.
inline SdeSystem chem_system(const ChemParams& k = {}, Eigen::Vector2d x0 = {1.0, 1.0}) {
  FieldFn fn = [k](std::span<const double> s, std::span<double> out) {
    const double x = s[0], y = s[1];
    if (x < 0.0 || y < 0.0) throw CoefficientDomainError("rate negative at x=" + detail::format_point(s));
    const double sy = std::sqrt(k.b12 * y);
    out[0] = -k.b11 * x + k.b12 * y;
    out[1] = 0.0;
    out[2] = sy;
    out[3] = -std::sqrt(k.b11 * x);
    out[4] = 0.0;
    out[5] = k.a - k.b12 * x - k.b22 * y;
    out[6] = std::sqrt(k.a);
    out[7] = -sy;
    out[8] = 0.0;
    out[9] = -std::sqrt(k.b22 * y);
  };
  CoefficientField field(2, 5, std::move(fn), FieldSource::chem, "two-species reaction network");
  field.set_probe_box({1e-3, 5.0});
  return {std::move(field), LevyTriplet::time_and_brownian(4), VectorXd(x0), {"X", "Y"}};
}

/// a(x) = [[x1, 0], [x2²/r, −x1 x2/r]], r = ‖x‖, a(0) = 0.
inline CoefficientField two_signature_field() {
  FieldFn fn = [](std::span<const double> x, std::span<double> out) {
    const double r = std::hypot(x[0], x[1]);
    if (r == 0.0) return;
    out[0] = x[0];
    out[2] = x[1] * x[1] / r;
    out[3] = -x[0] * x[1] / r;
  };
  CoefficientField field(2, 2, std::move(fn), FieldSource::closure, "a(x) = [[x1, 0], [x2^2/r, -x1 x2/r]]");
  field.set_singular_points({VectorXd::Zero(2)});
  return field;
}

/// ã(x) = a(x)p(x) = [[x1²/r, x1 x2/r], [0, x2]], ã(0) = 0.
inline CoefficientField two_signature_companion_field() {
  FieldFn fn = [](std::span<const double> x, std::span<double> out) {
    const double r = std::hypot(x[0], x[1]);
    if (r == 0.0) return;
    out[0] = x[0] * x[0] / r;
    out[1] = x[0] * x[1] / r;
    out[3] = x[1];
  };
  CoefficientField field(2, 2, std::move(fn), FieldSource::closure, "a~(x) = [[x1^2/r, x1 x2/r], [0, x2]]");
  field.set_singular_points({VectorXd::Zero(2)});
  return field;
}

inline SdeSystem two_signature_system(bool companion = false, Eigen::Vector2d x0 = {1.0, 1.0}) {
  return {companion ? two_signature_companion_field() : two_signature_field(), LevyTriplet::brownian(2), VectorXd(x0)};
}

inline OuModel default_ou_model() {
  OuModel m;
  m.level = VectorXd::Zero(2);
  m.reversion = (MatrixXd(2, 2) << -1.0, 0.5, 0.3, -2.0).finished();
  m.sigma = (MatrixXd(2, 2) << 0.6, 0.0, 0.3, 0.5).finished();
  m.initial = VectorXd((VectorXd(2) << 0.5, -0.5).finished());
  return m;
}

/// dX = X dW.
inline SdeSystem gbm_system(double x0 = 1.0) {
  FieldFn fn = [](std::span<const double> x, std::span<double> out) { out[0] = x[0]; };
  CoefficientField field(1, 1, std::move(fn), FieldSource::closure, "a(x) = x");
  return {std::move(field), LevyTriplet::brownian(1), VectorXd(VectorXd::Constant(1, x0))};
}

/// dX = dZ with Z a compound Poisson process jumping by 2 at rate 1.
inline SdeSystem pure_jump_system(double x0 = 0.0) {
  FieldFn fn = [](std::span<const double>, std::span<double> out) { out[0] = 1.0; };
  CoefficientField field(1, 1, std::move(fn), FieldSource::closure, "a(x) = 1");
  LevyTriplet z(VectorXd::Zero(1), MatrixXd::Zero(1, 1), {{1.0, VectorXd::Constant(1, 2.0)}}, 1.0);
  return {std::move(field), std::move(z), VectorXd(VectorXd::Constant(1, x0))};
}

/// Two-dimensional jump diffusion with three jump atoms, two inside the unit
/// truncation ball and one outside.
inline SdeSystem levy_2d_system() {
  FieldFn fn = [](std::span<const double> x, std::span<double> out) {
    out[0] = 1.0 + 0.1 * x[1] * x[1];
    out[1] = 0.2 * std::sin(x[0]);
    out[2] = 0.3 * x[0];
    out[3] = 1.0 / (1.0 + x[0] * x[0]);
  };
  CoefficientField field(2, 2, std::move(fn), FieldSource::closure, "nonlinear jump diffusion");
  LevyTriplet z((VectorXd(2) << 0.1, -0.2).finished(), (MatrixXd(2, 2) << 0.5, 0.1, 0.1, 0.3).finished(),
                {{2.0, (VectorXd(2) << 0.5, -0.3).finished()},
                 {0.7, (VectorXd(2) << 1.5, 1.0).finished()},
                 {1.2, (VectorXd(2) << -0.2, 0.4).finished()}},
                1.0);
  return {std::move(field), std::move(z), VectorXd((VectorXd(2) << 0.5, -0.5).finished())};
}

struct Builtin {
  std::string name;
  std::string description;
  SdeSystem system;
  std::optional<InterventionSpec> intervention;
  /// Second system with the same generator (two-signatures only).
  std::optional<SdeSystem> companion;
  /// Closed-form parameters (ou only).
  std::optional<OuModel> ou;
};

inline std::vector<std::string> builtin_names() {
  return {"chem", "ou", "two-signatures", "ito-counterexample", "gbm", "pure-jump", "levy-2d"};
}

inline Builtin load_builtin(std::string_view name) {
  if (name == "chem")
    return {"chem", "two-species reaction network with diffusion approximation", chem_system(),
            InterventionSpec::on_state(1, ZetaLaw::constant(1.0)), std::nullopt, std::nullopt};
  if (name == "ou") {
    const OuModel model = default_ou_model();
    return {"ou", "two-dimensional Ornstein-Uhlenbeck process", ou_to_system(model),
            InterventionSpec::on_state(0, ZetaLaw::constant(2.0)), std::nullopt, model};
  }
  if (name == "two-signatures")
    return {"two-signatures", "two coefficient fields with equal a a^T and different signatures",
            two_signature_system(false), InterventionSpec::on_state(1, ZetaLaw::constant(1.0)),
            two_signature_system(true), std::nullopt};
  if (name == "ito-counterexample")
    return {"ito-counterexample", "X1 = W and X2 = f(X1) written as an SDE via Ito's formula", ito_system(square_function()),
            InterventionSpec::on_state(0, ZetaLaw::constant(1.0)), std::nullopt, std::nullopt};
  if (name == "gbm")
    return {"gbm", "geometric Brownian motion dX = X dW", gbm_system(), std::nullopt, std::nullopt, std::nullopt};
  if (name == "pure-jump")
    return {"pure-jump", "compound Poisson process with jumps of size 2 at rate 1", pure_jump_system(), std::nullopt,
            std::nullopt, std::nullopt};
  if (name == "levy-2d")
    return {"levy-2d", "two-dimensional jump diffusion with three jump atoms", levy_2d_system(),
            InterventionSpec::on_state(0, ZetaLaw::constant(0.5)), std::nullopt, std::nullopt};
  throw ConfigError("unknown builtin '" + std::string(name) + "'");
}

}  // namespace causal_sde
