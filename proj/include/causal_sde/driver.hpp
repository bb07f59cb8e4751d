#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "causal_sde/errors.hpp"
#include "causal_sde/rng.hpp"

namespace causal_sde {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace detail {

inline constexpr double kPsdRelTol = 1e-10;
inline constexpr double kSymmetryTol = 1e-12;

inline bool is_diagonal(const MatrixXd& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      if (i != j && m(i, j) != 0.0) return false;
  return true;
}

// Columns of an eigen-based factor: eigenvalues sorted descending, each
// eigenvector signed so its first nonzero component is nonnegative.
inline MatrixXd eigen_factor(const MatrixXd& c) {
  const Eigen::Index d = c.rows();
  MatrixXd out = MatrixXd::Zero(d, d);
  if (d == 0) return out;
  const double scale = c.norm();
  std::vector<double> values(static_cast<std::size_t>(d));
  MatrixXd vectors;
  if (is_diagonal(c)) {
    vectors = MatrixXd::Identity(d, d);
    for (Eigen::Index i = 0; i < d; ++i) values[static_cast<std::size_t>(i)] = c(i, i);
  } else {
    Eigen::SelfAdjointEigenSolver<MatrixXd> solver(0.5 * (c + c.transpose()));
    if (solver.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
    vectors = solver.eigenvectors();
    for (Eigen::Index i = 0; i < d; ++i)
      values[static_cast<std::size_t>(i)] = solver.eigenvalues()(i);
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(d));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    return values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(b)];
  });
  for (Eigen::Index col = 0; col < d; ++col) {
    const Eigen::Index src = order[static_cast<std::size_t>(col)];
    double lambda = values[static_cast<std::size_t>(src)];
    if (lambda < -kPsdRelTol * scale) throw NotPositiveSemidefinite();
    if (lambda < 0.0) lambda = 0.0;
    VectorXd v = vectors.col(src);
    for (Eigen::Index i = 0; i < d; ++i) {
      if (v(i) != 0.0) {
        if (v(i) < 0.0) v = -v;
        break;
      }
    }
    out.col(col) = std::sqrt(lambda) * v;
  }
  return out;
}

}  // namespace detail

/// L with L Lᵀ = C for a symmetric positive semidefinite C. Eigenvalues in
/// [-1e-10·‖C‖, 0) are clipped to zero; anything more negative is rejected.
inline MatrixXd psd_factor(const MatrixXd& c) {
  if (c.rows() != c.cols()) throw std::invalid_argument("psd_factor: matrix not square");
  return detail::eigen_factor(c);
}

struct JumpAtom {
  double rate = 0.0;
  VectorXd location;
};

/// Characteristic triplet (alpha, C, nu) of a d-dimensional Lévy process with
/// respect to the closed ball D of radius trunc_radius. nu is a finite sum of
/// point masses.
class LevyTriplet {
 public:
  LevyTriplet(VectorXd alpha, MatrixXd cov, std::vector<JumpAtom> jumps = {},
              double trunc_radius = 1.0)
      : alpha_(std::move(alpha)), cov_(std::move(cov)), jumps_(std::move(jumps)),
        trunc_radius_(trunc_radius) {
    const Eigen::Index d = alpha_.size();
    if (d <= 0) throw std::invalid_argument("Lévy triplet dimension must be positive");
    if (cov_.rows() != d || cov_.cols() != d)
      throw std::invalid_argument("Lévy triplet covariance has wrong shape");
    if (!alpha_.allFinite() || !cov_.allFinite())
      throw std::invalid_argument("Lévy triplet has non-finite entries");
    if (!(trunc_radius_ > 0.0) || !std::isfinite(trunc_radius_))
      throw std::invalid_argument("truncation radius must be positive");
    const double sym_err = (cov_ - cov_.transpose()).cwiseAbs().maxCoeff();
    if (sym_err > detail::kSymmetryTol) throw std::invalid_argument("covariance not symmetric");
    for (const auto& atom : jumps_) {
      if (atom.location.size() != d) throw std::invalid_argument("jump atom has wrong dimension");
      if (!(atom.rate > 0.0) || !std::isfinite(atom.rate))
        throw std::invalid_argument("jump atom rate must be positive and finite");
      if (!atom.location.allFinite() || atom.location.norm() == 0.0)
        throw std::invalid_argument("jump atom location must be nonzero and finite");
    }
    factor_ = psd_factor(cov_);
    // Keep only the nonzero columns; they are all a sampler needs.
    Eigen::Index rank = 0;
    for (Eigen::Index col = 0; col < d; ++col)
      if (factor_.col(col).squaredNorm() > 0.0) ++rank;
    reduced_factor_ = factor_.leftCols(rank);
    compensator_ = VectorXd::Zero(d);
    for (const auto& atom : jumps_)
      if (in_trunc_ball(atom.location)) compensator_ += atom.rate * atom.location;
  }

  /// Standard d-dimensional Brownian motion.
  static LevyTriplet brownian(Eigen::Index d) {
    return {VectorXd::Zero(d), MatrixXd::Identity(d, d)};
  }

  /// Driver for drift+diffusion systems: coordinate 0 is time (alpha_0 = 1,
  /// no noise), coordinates 1..d are independent Brownian motions.
  static LevyTriplet time_and_brownian(Eigen::Index d) {
    VectorXd alpha = VectorXd::Zero(d + 1);
    alpha(0) = 1.0;
    MatrixXd cov = MatrixXd::Identity(d + 1, d + 1);
    cov(0, 0) = 0.0;
    return {std::move(alpha), std::move(cov)};
  }

  Eigen::Index dim() const { return alpha_.size(); }
  const VectorXd& alpha() const { return alpha_; }
  const MatrixXd& cov() const { return cov_; }
  const std::vector<JumpAtom>& jumps() const { return jumps_; }
  double trunc_radius() const { return trunc_radius_; }
  /// Full d×d factor, L Lᵀ = C.
  const MatrixXd& gaussian_factor() const { return factor_; }
  /// Nonzero columns of gaussian_factor().
  const MatrixXd& reduced_gaussian_factor() const { return reduced_factor_; }
  /// Σ λ_k y_k over atoms inside D.
  const VectorXd& compensator() const { return compensator_; }
  bool in_trunc_ball(const VectorXd& y) const { return y.norm() <= trunc_radius_; }
  double total_jump_rate() const {
    double s = 0.0;
    for (const auto& atom : jumps_) s += atom.rate;
    return s;
  }

  /// Same law, different truncation ball: alpha is shifted by the atoms that
  /// change sides.
  LevyTriplet with_trunc_radius(double radius) const {
    VectorXd alpha = alpha_;
    for (const auto& atom : jumps_) {
      const double r = atom.location.norm();
      const bool in_old = r <= trunc_radius_;
      const bool in_new = r <= radius;
      if (in_old && !in_new) alpha -= atom.rate * atom.location;
      if (!in_old && in_new) alpha += atom.rate * atom.location;
    }
    return {alpha, cov_, jumps_, radius};
  }

  friend bool operator==(const LevyTriplet& a, const LevyTriplet& b) {
    if (a.dim() != b.dim() || a.trunc_radius_ != b.trunc_radius_) return false;
    if (a.alpha_ != b.alpha_ || a.cov_ != b.cov_) return false;
    if (a.jumps_.size() != b.jumps_.size()) return false;
    for (std::size_t k = 0; k < a.jumps_.size(); ++k)
      if (a.jumps_[k].rate != b.jumps_[k].rate || a.jumps_[k].location != b.jumps_[k].location)
        return false;
    return true;
  }

 private:
  VectorXd alpha_;
  MatrixXd cov_;
  std::vector<JumpAtom> jumps_;
  double trunc_radius_;
  MatrixXd factor_;
  MatrixXd reduced_factor_;
  VectorXd compensator_;
};

/// E exp(i uᵀ Z_t) for the Lévy process with the given triplet.
inline std::complex<double> characteristic_function(const LevyTriplet& triplet, const VectorXd& u,
                                                    double t) {
  using namespace std::complex_literals;
  if (u.size() != triplet.dim()) throw std::invalid_argument("characteristic_function: bad u");
  std::complex<double> exponent = 1i * u.dot(triplet.alpha()) - 0.5 * u.dot(triplet.cov() * u);
  for (const auto& atom : triplet.jumps()) {
    const double uy = u.dot(atom.location);
    std::complex<double> term = std::exp(1i * uy) - 1.0;
    if (triplet.in_trunc_ball(atom.location)) term -= 1i * uy;
    exponent += atom.rate * term;
  }
  return std::exp(t * exponent);
}

/// Increment sampler for a fixed (triplet, delta), with everything that does
/// not depend on the stream precomputed. draw() writes
///   delta·(alpha − Σ_{‖y‖≤r} λ y) + L ξ √delta + Σ_k N_k y_k,
/// N_k ~ Poisson(λ_k delta), consuming the stream in a fixed order: Gaussian
/// components first, then one Poisson count per atom.
class IncrementSampler {
 public:
  IncrementSampler(const LevyTriplet& triplet, double delta)
      : dim_(triplet.dim()), drift_(delta * (triplet.alpha() - triplet.compensator())),
        scaled_factor_(triplet.reduced_gaussian_factor() * std::sqrt(delta)) {
    if (!(delta > 0.0)) throw std::invalid_argument("increment length must be positive");
    for (const auto& atom : triplet.jumps()) {
      const double mean = atom.rate * delta;
      atoms_.push_back({mean, std::exp(-mean), atom.location});
    }
    normals_.resize(static_cast<std::size_t>(scaled_factor_.cols()));
  }

  Eigen::Index dim() const { return dim_; }

  void draw(Stream& stream, std::span<double> out) {
    const auto d = static_cast<std::size_t>(dim_);
    for (std::size_t i = 0; i < d; ++i) out[i] = drift_(static_cast<Eigen::Index>(i));
    if (!normals_.empty()) {
      for (auto& z : normals_) z = stream.normal();
      const Eigen::Index rank = scaled_factor_.cols();
      for (std::size_t i = 0; i < d; ++i) {
        double g = 0.0;
        for (Eigen::Index c = 0; c < rank; ++c)
          g += scaled_factor_(static_cast<Eigen::Index>(i), c) * normals_[static_cast<std::size_t>(c)];
        out[i] += g;
      }
    }
    for (const auto& atom : atoms_) {
      const std::uint64_t n = stream.poisson(atom.mean, atom.exp_neg_mean);
      if (n == 0) continue;
      const double count = static_cast<double>(n);
      for (std::size_t i = 0; i < d; ++i)
        out[i] += count * atom.location(static_cast<Eigen::Index>(i));
    }
  }

  VectorXd draw(Stream& stream) {
    VectorXd out(dim_);
    draw(stream, std::span<double>(out.data(), static_cast<std::size_t>(dim_)));
    return out;
  }

 private:
  struct PreparedAtom {
    double mean;
    double exp_neg_mean;
    VectorXd location;
  };
  Eigen::Index dim_;
  VectorXd drift_;
  MatrixXd scaled_factor_;
  std::vector<PreparedAtom> atoms_;
  std::vector<double> normals_;
};

/// One increment Z_{t+delta} − Z_t drawn from the stream.
inline VectorXd sample_increment(const LevyTriplet& triplet, double delta, Stream& stream) {
  IncrementSampler sampler(triplet, delta);
  return sampler.draw(stream);
}

}  // namespace causal_sde
