#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>
#include <vector>

#include "causal_sde/driver.hpp"
#include "causal_sde/errors.hpp"
#include "causal_sde/intervention.hpp"
#include "causal_sde/system.hpp"

namespace causal_sde {

namespace detail {

// Padé coefficients and 1-norm bounds for scaling and squaring (Higham 2005).
inline constexpr std::array<double, 4> kPade3 = {120.0, 60.0, 12.0, 1.0};
inline constexpr std::array<double, 6> kPade5 = {30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0};
inline constexpr std::array<double, 8> kPade7 = {17297280.0, 8648640.0, 1995840.0, 277200.0,
                                                 25200.0,    1512.0,    56.0,      1.0};
inline constexpr std::array<double, 10> kPade9 = {17643225600.0, 8821612800.0, 2075673600.0, 302702400.0,
                                                  30270240.0,    2162160.0,    110880.0,     3960.0,
                                                  90.0,          1.0};
inline constexpr std::array<double, 14> kPade13 = {
    64764752532480000.0, 32382376266240000.0, 7771770303897600.0, 1187353796428800.0, 129060195264000.0,
    10559470521600.0,    670442572800.0,      33522128640.0,      1323241920.0,       40840800.0,
    960960.0,            16380.0,             182.0,              1.0};
inline constexpr std::array<double, 5> kTheta = {1.495585217958292e-2, 2.539398330063230e-1,
                                                 9.504178996162932e-1, 2.097847961257068e0,
                                                 5.371920351148152e0};

template <std::size_t N>
MatrixXd pade_low(const MatrixXd& a, const std::array<double, N>& b) {
  const Eigen::Index n = a.rows();
  const MatrixXd id = MatrixXd::Identity(n, n);
  const MatrixXd a2 = a * a;
  MatrixXd power = id;
  MatrixXd u = MatrixXd::Zero(n, n);
  MatrixXd v = MatrixXd::Zero(n, n);
  for (std::size_t k = 0; k < N; k += 2) {
    v += b[k] * power;
    u += b[k + 1] * power;
    power = power * a2;
  }
  u = a * u;
  return (v - u).partialPivLu().solve(v + u);
}

inline MatrixXd pade13(const MatrixXd& a) {
  const auto& b = kPade13;
  const Eigen::Index n = a.rows();
  const MatrixXd id = MatrixXd::Identity(n, n);
  const MatrixXd a2 = a * a;
  const MatrixXd a4 = a2 * a2;
  const MatrixXd a6 = a4 * a2;
  const MatrixXd u =
      a * (a6 * (b[13] * a6 + b[11] * a4 + b[9] * a2) + b[7] * a6 + b[5] * a4 + b[3] * a2 + b[1] * id);
  const MatrixXd v = a6 * (b[12] * a6 + b[10] * a4 + b[8] * a2) + b[6] * a6 + b[4] * a4 + b[2] * a2 + b[0] * id;
  return (v - u).partialPivLu().solve(v + u);
}

}  // namespace detail

/// e^M by scaling and squaring with Padé approximants of degree up to 13.
inline MatrixXd matrix_exp(const MatrixXd& m) {
  if (m.rows() != m.cols()) throw std::invalid_argument("matrix_exp: matrix not square");
  if (!m.allFinite()) throw std::invalid_argument("matrix_exp: non-finite entries");
  if (m.rows() == 0) return m;
  const double norm = m.cwiseAbs().colwise().sum().maxCoeff();
  if (norm <= detail::kTheta[0]) return detail::pade_low(m, detail::kPade3);
  if (norm <= detail::kTheta[1]) return detail::pade_low(m, detail::kPade5);
  if (norm <= detail::kTheta[2]) return detail::pade_low(m, detail::kPade7);
  if (norm <= detail::kTheta[3]) return detail::pade_low(m, detail::kPade9);
  int s = 0;
  if (norm > detail::kTheta[4]) s = std::max(0, static_cast<int>(std::ceil(std::log2(norm / detail::kTheta[4]))));
  MatrixXd r = detail::pade13(m / std::ldexp(1.0, s));
  for (int i = 0; i < s; ++i) r = r * r;
  return r;
}

/// ∫₀ᵗ e^{sB} Q e^{sBᵀ} ds from the exponential of [[−B, Q], [0, Bᵀ]]·t.
inline MatrixXd gramian(const MatrixXd& b, const MatrixXd& q, double t) {
  const Eigen::Index p = b.rows();
  if (b.cols() != p || q.rows() != p || q.cols() != p) throw std::invalid_argument("gramian: shape mismatch");
  if (t < 0.0) throw std::invalid_argument("gramian: t must be nonnegative");
  if (t == 0.0) return MatrixXd::Zero(p, p);
  MatrixXd block = MatrixXd::Zero(2 * p, 2 * p);
  block.topLeftCorner(p, p) = -b * t;
  block.topRightCorner(p, p) = q * t;
  block.bottomRightCorner(p, p) = b.transpose() * t;
  const MatrixXd e = matrix_exp(block);
  const MatrixXd w = e.bottomRightCorner(p, p).transpose() * e.topRightCorner(p, p);
  return 0.5 * (w + w.transpose());
}

/// dX = B(X − A) dt + σ dW.
struct OuModel {
  VectorXd level;      // A
  MatrixXd reversion;  // B
  MatrixXd sigma;      // σ, p×q
  InitialLaw initial;
  std::vector<std::string> labels;

  std::size_t p() const { return static_cast<std::size_t>(level.size()); }

  void validate() const {
    const Eigen::Index p = level.size();
    if (p == 0) throw std::invalid_argument("OU model needs at least one coordinate");
    if (reversion.rows() != p || reversion.cols() != p) throw std::invalid_argument("OU reversion matrix must be p×p");
    if (sigma.rows() != p || sigma.cols() == 0) throw std::invalid_argument("OU diffusion must be p×q with q ≥ 1");
    if (initial_dimension(initial) != static_cast<std::size_t>(p))
      throw std::invalid_argument("OU initial law has wrong dimension");
  }
};

/// Canonical drift+diffusion system: column 0 is B(x − A), columns 1..q are σ.
/// Declared signature: i→j iff B_ji ≠ 0.
inline SdeSystem ou_to_system(const OuModel& model) {
  model.validate();
  const std::size_t p = model.p();
  const auto q = static_cast<std::size_t>(model.sigma.cols());
  const std::size_t d = q + 1;
  FieldFn fn = [a = model.level, b = model.reversion, s = model.sigma, p, q, d](std::span<const double> x,
                                                                               std::span<double> out) {
    for (std::size_t i = 0; i < p; ++i) {
      double drift = 0.0;
      for (std::size_t j = 0; j < p; ++j)
        drift += b(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * (x[j] - a(static_cast<Eigen::Index>(j)));
      out[i * d] = drift;
      for (std::size_t k = 0; k < q; ++k)
        out[i * d + 1 + k] = s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    }
  };
  CoefficientField field(p, d, std::move(fn), FieldSource::linear, "Ornstein-Uhlenbeck B(x - A), sigma");
  SignatureGraph sig(p);
  for (std::size_t i = 0; i < p; ++i)
    for (std::size_t j = 0; j < p; ++j)
      if (model.reversion(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) != 0.0) sig.add_edge(i, j);
  field.declare_dependence(std::move(sig));
  return {std::move(field), LevyTriplet::time_and_brownian(static_cast<Eigen::Index>(q)), model.initial,
          model.labels};
}

/// Postintervention OU model for the constant intervention X^m := ζ:
/// B̃ = B without row and column m, Ã = α − B̃⁻¹β with α = A without m and
/// β_i = B_im(ζ − A_m), σ̃ = σ without row m.
inline OuModel ou_intervene(const OuModel& model, std::size_t m, double zeta, double cond_limit = 1e12) {
  model.validate();
  const std::size_t p = model.p();
  if (p < 2) throw std::invalid_argument("intervention needs at least two coordinates");
  if (m >= p) throw std::invalid_argument("intervention target out of range");
  const auto mi = static_cast<Eigen::Index>(m);
  const MatrixXd bt = detail::drop_row_col(model.reversion, m);
  Eigen::JacobiSVD<MatrixXd> svd(bt);
  const auto& sv = svd.singularValues();
  const double smin = sv(sv.size() - 1);
  if (!(smin > 0.0) || sv(0) / smin > cond_limit) throw SingularReversionMatrix();

  const VectorXd alpha = detail::drop_coordinate(model.level, m);
  VectorXd beta(static_cast<Eigen::Index>(p - 1));
  for (Eigen::Index i = 0, r = 0; i < static_cast<Eigen::Index>(p); ++i)
    if (i != mi) beta(r++) = model.reversion(i, mi) * (zeta - model.level(mi));

  OuModel out;
  out.level = alpha - bt.partialPivLu().solve(beta);
  out.reversion = bt;
  out.sigma = MatrixXd(static_cast<Eigen::Index>(p - 1), model.sigma.cols());
  for (Eigen::Index i = 0, r = 0; i < static_cast<Eigen::Index>(p); ++i)
    if (i != mi) out.sigma.row(r++) = model.sigma.row(i);
  out.initial = detail::drop_initial(model.initial, m);
  if (!model.labels.empty()) out.labels = detail::drop_label(model.labels, m);
  return out;
}

/// Law of X_t given X_0 = x: N(A + e^{tB}(x − A), ∫₀ᵗ e^{sB} σσᵀ e^{sBᵀ} ds).
inline GaussianLaw ou_transition(const OuModel& model, const VectorXd& x, double t) {
  model.validate();
  if (t < 0.0) throw std::invalid_argument("ou_transition: t must be nonnegative");
  if (x.size() != model.level.size()) throw std::invalid_argument("ou_transition: x has wrong dimension");
  const MatrixXd e = matrix_exp(model.reversion * t);
  return {model.level + e * (x - model.level), gramian(model.reversion, model.sigma * model.sigma.transpose(), t)};
}

/// Law of X_t when X_0 itself follows the model's initial law.
inline GaussianLaw ou_marginal(const OuModel& model, double t) {
  model.validate();
  const MatrixXd e = matrix_exp(model.reversion * t);
  const MatrixXd g = gramian(model.reversion, model.sigma * model.sigma.transpose(), t);
  if (const auto* x = std::get_if<VectorXd>(&model.initial)) return {model.level + e * (*x - model.level), g};
  const auto& law = std::get<GaussianLaw>(model.initial);
  return {model.level + e * (law.mean - model.level), e * law.cov * e.transpose() + g};
}

}  // namespace causal_sde
