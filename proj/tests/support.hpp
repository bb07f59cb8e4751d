#pragma once

#include <Eigen/Dense>

#include <cstdint>

#include "causal_sde/rng.hpp"

namespace testing_support {

/// Deterministic source of random test inputs.
class Gen {
 public:
  explicit Gen(std::uint64_t seed, std::uint64_t index = 0) : stream_(seed, index, 0) {}

  double uniform(double lo, double hi) { return lo + (hi - lo) * stream_.uniform(); }
  double normal() { return stream_.normal(); }
  std::size_t index(std::size_t n) { return static_cast<std::size_t>(stream_.uniform() * static_cast<double>(n)); }
  bool coin() { return stream_.uniform() < 0.5; }

  Eigen::VectorXd vector(Eigen::Index n, double lo, double hi) {
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = uniform(lo, hi);
    return v;
  }
  Eigen::MatrixXd matrix(Eigen::Index r, Eigen::Index c, double scale = 1.0) {
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = scale * normal();
    return m;
  }
  /// Random positive semidefinite matrix of the given rank.
  Eigen::MatrixXd psd(Eigen::Index n, Eigen::Index rank) {
    const Eigen::MatrixXd f = matrix(n, rank);
    return f * f.transpose();
  }

 private:
  causal_sde::Stream stream_;
};

}  // namespace testing_support
