#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "causal_sde/euler.hpp"
#include "causal_sde/intervention.hpp"
#include "causal_sde/ou.hpp"

namespace causal_sde {

struct OuMomentReport {
  GaussianLaw closed_form;
  GaussianLaw empirical;
  VectorXd mean_se;
  MatrixXd cov_se;
  /// Largest |empirical − closed| / SE over the means.
  double max_mean_z = 0.0;
  /// Largest |empirical − closed| / max(4·SE, 5%·|closed|) over covariance entries.
  double max_cov_ratio = 0.0;
  std::size_t used_paths = 0;
  double horizon = 0.0;
  bool passed = false;
};

/// Simulates the intervened OU system through the generic SDE route and
/// compares its time-t moments with the closed-form law of the intervened
/// OU model. Means must lie within 4·SE, covariance entries within
/// max(4·SE, 5% relative).
inline OuMomentReport ou_moment_check(const OuModel& model, std::size_t m, double zeta, double t, double delta,
                                      std::size_t n_paths, std::uint64_t seed) {
  OuMomentReport r;
  r.horizon = t;
  r.closed_form = ou_marginal(ou_intervene(model, m, zeta), t);
  const SdeSystem post = intervene_sde(ou_to_system(model), InterventionSpec::on_state(m, ZetaLaw::constant(zeta)));
  const Grid grid(t, delta);
  SimulateOptions opts;
  opts.store_steps = {grid.steps()};
  const auto ens = simulate(post, grid, n_paths, seed, opts);

  const Eigen::Index q = static_cast<Eigen::Index>(post.p());
  MatrixXd samples(static_cast<Eigen::Index>(n_paths - ens.exploded_count()), q);
  for (std::size_t path = 0, row = 0; path < n_paths; ++path) {
    if (ens.exploded(path)) continue;
    for (Eigen::Index c = 0; c < q; ++c) samples(static_cast<Eigen::Index>(row), c) = ens.at(path, 0, static_cast<std::size_t>(c));
    ++row;
  }
  const double n = static_cast<double>(samples.rows());
  r.used_paths = static_cast<std::size_t>(samples.rows());
  const VectorXd mean = samples.colwise().mean();
  const MatrixXd centered = samples.rowwise() - mean.transpose();
  const MatrixXd cov = centered.transpose() * centered / (n - 1.0);
  r.empirical = {mean, cov};
  r.mean_se = (cov.diagonal() / n).cwiseSqrt();
  r.cov_se = MatrixXd::Zero(q, q);
  for (Eigen::Index i = 0; i < q; ++i)
    for (Eigen::Index j = 0; j < q; ++j) {
      const VectorXd w = centered.col(i).cwiseProduct(centered.col(j));
      const double wm = w.mean();
      r.cov_se(i, j) = std::sqrt((w.array() - wm).square().sum() / (n - 1.0) / n);
    }

  bool ok = true;
  for (Eigen::Index i = 0; i < q; ++i) {
    const double diff = std::abs(mean(i) - r.closed_form.mean(i));
    r.max_mean_z = std::max(r.max_mean_z, r.mean_se(i) > 0.0 ? diff / r.mean_se(i) : (diff > 0.0 ? INFINITY : 0.0));
    ok = ok && diff <= 4.0 * r.mean_se(i);
    for (Eigen::Index j = 0; j < q; ++j) {
      const double allowed = std::max(4.0 * r.cov_se(i, j), 0.05 * std::abs(r.closed_form.cov(i, j)));
      const double cdiff = std::abs(cov(i, j) - r.closed_form.cov(i, j));
      r.max_cov_ratio = std::max(r.max_cov_ratio, allowed > 0.0 ? cdiff / allowed : (cdiff > 0.0 ? INFINITY : 0.0));
      ok = ok && cdiff <= allowed;
    }
  }
  r.passed = ok;
  return r;
}

}  // namespace causal_sde
