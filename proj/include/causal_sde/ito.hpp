#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "causal_sde/euler.hpp"
#include "causal_sde/intervention.hpp"
#include "causal_sde/system.hpp"

namespace causal_sde {

struct ItoFunction {
  std::function<double(double)> f;
  std::function<double(double)> df;
  std::function<double(double)> d2f;
  std::string name;
};

inline ItoFunction square_function() {
  return {[](double x) { return x * x; }, [](double x) { return 2.0 * x; }, [](double) { return 2.0; }, "x^2"};
}

/// X¹ = W and X² = f(0) + ½∫f''(X¹)ds + ∫f'(X¹)dW, so X² = f(X¹) before any
/// intervention.
inline SdeSystem ito_system(const ItoFunction& fn) {
  FieldFn field_fn = [fn](std::span<const double> x, std::span<double> out) {
    out[1] = 1.0;
    out[2] = 0.5 * fn.d2f(x[0]);
    out[3] = fn.df(x[0]);
  };
  CoefficientField field(2, 2, std::move(field_fn), FieldSource::closure, "X1 = W, X2 = f(X1) with f(x) = " + fn.name);
  return {std::move(field), LevyTriplet::time_and_brownian(1),
          VectorXd((VectorXd(2) << 0.0, fn.f(0.0)).finished()), {"x1", "x2"}};
}

struct ItoReport {
  double zeta = 0.0;
  double horizon = 0.0;
  double delta = 0.0;
  std::size_t n_paths = 0;
  /// Max over paths and grid times of |X²_t − (f(0) + ½f''(ζ)t + f'(ζ)W_t)|.
  double max_dist_closed_form = 0.0;
  /// Max over paths and grid times of |X²_t − f(ζ)|.
  double max_dist_constant = 0.0;
  double dist_constant_at_t0 = 0.0;
  double median_dist_constant_at_horizon = 0.0;
  /// The postintervention X² is not the constant f(ζ).
  bool contradiction = false;
};

/// Intervenes X¹ := ζ in the Itô system and compares the postintervention X²
/// with its closed form and with the constant f(ζ), under shared noise. W is
/// read off the observational X¹ path.
inline ItoReport ito_counterexample(const ItoFunction& fn, double zeta, double horizon, double delta,
                                    std::size_t n_paths, std::uint64_t seed) {
  const Grid grid(horizon, delta);
  const SdeSystem full = ito_system(fn);
  const SdeSystem post = intervene_sde(full, InterventionSpec::on_state(0, ZetaLaw::constant(zeta)));
  const auto ens = simulate_shared({full, post}, grid, n_paths, seed);
  const auto& obs = ens[0];
  const auto& intervened = ens[1];

  ItoReport r;
  r.zeta = zeta;
  r.horizon = horizon;
  r.delta = delta;
  r.n_paths = n_paths;
  const double f0 = fn.f(0.0);
  const double fz = fn.f(zeta);
  const double half_d2 = 0.5 * fn.d2f(zeta);
  const double d1 = fn.df(zeta);
  std::vector<double> at_horizon;
  r.dist_constant_at_t0 = std::abs(f0 - fz);
  for (std::size_t path = 0; path < n_paths; ++path) {
    if (obs.exploded(path) || intervened.exploded(path)) continue;
    for (std::size_t k = 0; k <= grid.steps(); ++k) {
      const double w = obs.at(path, k, 0);
      const double x2 = intervened.at(path, k, 0);
      const double closed = f0 + half_d2 * grid.time(k) + d1 * w;
      r.max_dist_closed_form = std::max(r.max_dist_closed_form, std::abs(x2 - closed));
      r.max_dist_constant = std::max(r.max_dist_constant, std::abs(x2 - fz));
      if (k == 0) r.dist_constant_at_t0 = std::abs(x2 - fz);
    }
    at_horizon.push_back(std::abs(intervened.at(path, grid.steps(), 0) - fz));
  }
  if (!at_horizon.empty()) {
    std::sort(at_horizon.begin(), at_horizon.end());
    const std::size_t n = at_horizon.size();
    r.median_dist_constant_at_horizon =
        n % 2 == 1 ? at_horizon[n / 2] : 0.5 * (at_horizon[n / 2 - 1] + at_horizon[n / 2]);
  }
  r.contradiction = r.max_dist_constant > 0.0;
  return r;
}

}  // namespace causal_sde
