#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>
#include <vector>

#include "causal_sde/driver.hpp"
#include "causal_sde/euler.hpp"
#include "causal_sde/parallel.hpp"
#include "causal_sde/system.hpp"

namespace causal_sde {

/// Twice differentiable test function f: R^p → R. Gradient and Hessian fall
/// back to central differences with step h = 1e-5·(1 + ‖x‖).
class ScalarField2 {
 public:
  using ValueFn = std::function<double(const VectorXd&)>;
  using GradFn = std::function<VectorXd(const VectorXd&)>;
  using HessFn = std::function<MatrixXd(const VectorXd&)>;

  explicit ScalarField2(ValueFn value, GradFn grad = {}, HessFn hess = {})
      : value_(std::move(value)), grad_(std::move(grad)), hess_(std::move(hess)) {}

  double value(const VectorXd& x) const { return value_(x); }
  bool analytic() const { return static_cast<bool>(grad_) && static_cast<bool>(hess_); }

  VectorXd gradient(const VectorXd& x) const {
    if (grad_) return grad_(x);
    const double h = step(x);
    VectorXd g(x.size());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      VectorXd up = x, dn = x;
      up(i) += h;
      dn(i) -= h;
      g(i) = (value_(up) - value_(dn)) / (2.0 * h);
    }
    return g;
  }

  MatrixXd hessian(const VectorXd& x) const {
    if (hess_) return hess_(x);
    const double h = step(x);
    const Eigen::Index p = x.size();
    MatrixXd hm(p, p);
    const double f0 = value_(x);
    for (Eigen::Index i = 0; i < p; ++i) {
      VectorXd up = x, dn = x;
      up(i) += h;
      dn(i) -= h;
      hm(i, i) = (value_(up) - 2.0 * f0 + value_(dn)) / (h * h);
      for (Eigen::Index j = 0; j < i; ++j) {
        VectorXd pp = x, pm = x, mp = x, mm = x;
        pp(i) += h, pp(j) += h;
        pm(i) += h, pm(j) -= h;
        mp(i) -= h, mp(j) += h;
        mm(i) -= h, mm(j) -= h;
        hm(i, j) = hm(j, i) = (value_(pp) - value_(pm) - value_(mp) + value_(mm)) / (4.0 * h * h);
      }
    }
    return hm;
  }

  /// α·f + β·g, with analytic derivatives when both have them.
  friend ScalarField2 combine(double alpha, const ScalarField2& f, double beta, const ScalarField2& g) {
    ValueFn v = [=](const VectorXd& x) { return alpha * f.value(x) + beta * g.value(x); };
    if (!f.analytic() || !g.analytic()) return ScalarField2(std::move(v));
    return ScalarField2(
        std::move(v), [=](const VectorXd& x) -> VectorXd { return alpha * f.gradient(x) + beta * g.gradient(x); },
        [=](const VectorXd& x) -> MatrixXd { return alpha * f.hessian(x) + beta * g.hessian(x); });
  }

 private:
  static double step(const VectorXd& x) { return 1e-5 * (1.0 + x.norm()); }
  ValueFn value_;
  GradFn grad_;
  HessFn hess_;
};

/// f(x) = P(u)·exp(−‖u‖²/(2 s²)), u = x − c, P(u) = p0 + bᵀu + uᵀQu with Q
/// symmetric. All derivatives analytic.
inline ScalarField2 polynomial_bump(VectorXd center, double width, double p0, VectorXd b, MatrixXd q) {
  if (!(width > 0.0)) throw std::invalid_argument("bump width must be positive");
  const double s2 = width * width;
  q = 0.5 * (q + q.transpose()).eval();
  auto parts = [=](const VectorXd& x) {
    const VectorXd u = x - center;
    const double g = std::exp(-u.squaredNorm() / (2.0 * s2));
    const double poly = p0 + b.dot(u) + u.dot(q * u);
    return std::tuple{u, g, poly};
  };
  return ScalarField2(
      [=](const VectorXd& x) {
        auto [u, g, poly] = parts(x);
        return poly * g;
      },
      [=](const VectorXd& x) -> VectorXd {
        auto [u, g, poly] = parts(x);
        const VectorXd dpoly = b + 2.0 * q * u;
        const VectorXd dg = -u / s2 * g;
        return dpoly * g + poly * dg;
      },
      [=](const VectorXd& x) -> MatrixXd {
        auto [u, g, poly] = parts(x);
        const Eigen::Index p = u.size();
        const VectorXd dpoly = b + 2.0 * q * u;
        const VectorXd dg = -u / s2 * g;
        const MatrixXd hg = (u * u.transpose() / (s2 * s2) - MatrixXd::Identity(p, p) / s2) * g;
        return 2.0 * q * g + dpoly * dg.transpose() + dg * dpoly.transpose() + poly * hg;
      });
}

/// Gaussian bump exp(−‖x − c‖²/(2 s²)).
inline ScalarField2 gaussian_bump(VectorXd center, double width) {
  const auto p = center.size();
  return polynomial_bump(std::move(center), width, 1.0, VectorXd::Zero(p), MatrixXd::Zero(p, p));
}

/// Deterministic battery of polynomial-times-bump test fields with centers
/// spread over the box.
inline std::vector<ScalarField2> test_field_battery(std::size_t p, std::size_t count, ProbeBox box = {},
                                                    double width = 1.0) {
  std::vector<ScalarField2> out;
  const auto centers = quasi_uniform_points(count, p);
  const auto pp = static_cast<Eigen::Index>(p);
  for (std::size_t k = 0; k < count; ++k) {
    const VectorXd c = VectorXd::Constant(pp, box.lo) + (box.hi - box.lo) * centers[k];
    VectorXd b(pp);
    for (Eigen::Index i = 0; i < pp; ++i) b(i) = 0.3 * static_cast<double>(static_cast<int>((k + static_cast<std::size_t>(i)) % 3) - 1);
    MatrixXd q = MatrixXd::Zero(pp, pp);
    if (k % 2 == 1) {
      q.diagonal().setConstant(0.2);
      if (p > 1) q(0, 1) = q(1, 0) = -0.1;
    }
    out.push_back(polynomial_bump(c, width, 1.0 + 0.25 * static_cast<double>(k % 4), b, q));
  }
  return out;
}

struct PushforwardAtom {
  double rate = 0.0;
  VectorXd location;
};

/// Pointwise generator data at x.
struct GeneratorTerms {
  VectorXd x;
  VectorXd beta;
  MatrixXd diffusion;
  /// a(x)α, the drift of the D-based form.
  VectorXd drift_d;
  /// Atoms of the pushforward of ν under y ↦ a(x)y, in driver order.
  std::vector<PushforwardAtom> atoms;
  /// Whether each driver atom lies in D.
  std::vector<bool> in_d;
  double r_d = 1.0;
  double r_e = 1.0;
};

/// β(x) = a(x)α + Σ_k λ_k (1[‖a(x)y_k‖ ≤ r_E] − 1[‖y_k‖ ≤ r_D]) a(x)y_k,
/// diffusion a(x)Ca(x)ᵀ and the pushforward atoms (λ_k, a(x)y_k).
inline GeneratorTerms compute_terms(const SdeSystem& system, const VectorXd& x, double r_e = 1.0) {
  if (!(r_e > 0.0)) throw std::invalid_argument("state-space truncation radius must be positive");
  const LevyTriplet& z = system.driver();
  const MatrixXd a = evaluate_coeff(system, x);
  GeneratorTerms t;
  t.x = x;
  t.r_d = z.trunc_radius();
  t.r_e = r_e;
  t.drift_d = a * z.alpha();
  t.beta = t.drift_d;
  const MatrixXd diff = a * z.cov() * a.transpose();
  t.diffusion = 0.5 * (diff + diff.transpose());
  for (const auto& atom : z.jumps()) {
    VectorXd loc = a * atom.location;
    const bool in_e = loc.norm() <= r_e;
    const bool in_d = z.in_trunc_ball(atom.location);
    if (in_e && !in_d) t.beta += atom.rate * loc;
    if (!in_e && in_d) t.beta -= atom.rate * loc;
    t.in_d.push_back(in_d);
    t.atoms.push_back({atom.rate, std::move(loc)});
  }
  return t;
}

enum class GeneratorForm { d_based, e_based };

/// Af(x) from precomputed terms.
inline double apply_generator(const GeneratorTerms& t, const ScalarField2& f, GeneratorForm form) {
  const VectorXd grad = f.gradient(t.x);
  const MatrixXd hess = f.hessian(t.x);
  const double fx = f.value(t.x);
  double out = grad.dot(form == GeneratorForm::d_based ? t.drift_d : t.beta);
  out += 0.5 * (t.diffusion.cwiseProduct(hess)).sum();
  for (std::size_t k = 0; k < t.atoms.size(); ++k) {
    const auto& atom = t.atoms[k];
    double term = f.value(t.x + atom.location) - fx;
    const bool compensated = form == GeneratorForm::d_based ? t.in_d[k] : atom.location.norm() <= t.r_e;
    if (compensated) term -= grad.dot(atom.location);
    out += atom.rate * term;
  }
  return out;
}

inline double apply_generator(const SdeSystem& system, const ScalarField2& f, const VectorXd& x,
                              GeneratorForm form = GeneratorForm::d_based, double r_e = 1.0) {
  return apply_generator(compute_terms(system, x, r_e), f, form);
}

namespace detail {

/// Merges atoms whose locations agree within tol (summing rates) and drops
/// atoms at the origin, which carry no jump.
inline std::vector<PushforwardAtom> normalize_atoms(const std::vector<PushforwardAtom>& atoms, double tol) {
  std::vector<PushforwardAtom> out;
  for (const auto& a : atoms) {
    if (a.location.norm() <= tol) continue;
    bool merged = false;
    for (auto& o : out)
      if ((o.location - a.location).norm() <= tol) {
        o.rate += a.rate;
        merged = true;
        break;
      }
    if (!merged) out.push_back(a);
  }
  return out;
}

/// Total variation style distance between two finite atomic measures:
/// matched atoms contribute |λ_A − λ_B|, unmatched atoms their full rate.
inline double atom_distance(const std::vector<PushforwardAtom>& a, const std::vector<PushforwardAtom>& b,
                            double tol) {
  const auto na = normalize_atoms(a, tol);
  const auto nb = normalize_atoms(b, tol);
  std::vector<bool> used(nb.size(), false);
  double dist = 0.0;
  for (const auto& x : na) {
    bool matched = false;
    for (std::size_t j = 0; j < nb.size(); ++j)
      if (!used[j] && (nb[j].location - x.location).norm() <= tol) {
        dist += std::abs(x.rate - nb[j].rate);
        used[j] = true;
        matched = true;
        break;
      }
    if (!matched) dist += x.rate;
  }
  for (std::size_t j = 0; j < nb.size(); ++j)
    if (!used[j]) dist += nb[j].rate;
  return dist;
}

}  // namespace detail

struct GeneratorPointComparison {
  VectorXd x;
  double drift_diff = 0.0;
  double diffusion_diff = 0.0;
  double jump_diff = 0.0;
  double functional_diff = 0.0;
};

struct GeneratorComparison {
  double max_functional_diff = 0.0;
  double max_drift_diff = 0.0;
  double max_diffusion_diff = 0.0;
  double max_jump_diff = 0.0;
  double tol = 1e-12;
  bool structurally_equal = false;
  std::vector<GeneratorPointComparison> points;
};

/// Functional comparison |A_A f − A_B f| over points × fields and structural
/// comparison of β, a C aᵀ (max abs entry) and the pushforward measures.
inline GeneratorComparison compare_generators(const SdeSystem& a, const SdeSystem& b, const std::vector<VectorXd>& points,
                                              const std::vector<ScalarField2>& fields, double r_e = 1.0,
                                              double tol = 1e-12, double atom_tol = 1e-9) {
  if (a.p() != b.p()) throw std::invalid_argument("compare_generators: dimension mismatch");
  GeneratorComparison report;
  report.tol = tol;
  for (const auto& x : points) {
    if (static_cast<std::size_t>(x.size()) != a.p())
      throw std::invalid_argument("compare_generators: probe point has wrong dimension");
    const auto ta = compute_terms(a, x, r_e);
    const auto tb = compute_terms(b, x, r_e);
    GeneratorPointComparison pc;
    pc.x = x;
    pc.drift_diff = (ta.beta - tb.beta).cwiseAbs().maxCoeff();
    pc.diffusion_diff = (ta.diffusion - tb.diffusion).cwiseAbs().maxCoeff();
    pc.jump_diff = detail::atom_distance(ta.atoms, tb.atoms, atom_tol);
    for (const auto& f : fields)
      pc.functional_diff = std::max(
          pc.functional_diff,
          std::abs(apply_generator(ta, f, GeneratorForm::e_based) - apply_generator(tb, f, GeneratorForm::e_based)));
    report.max_functional_diff = std::max(report.max_functional_diff, pc.functional_diff);
    report.max_drift_diff = std::max(report.max_drift_diff, pc.drift_diff);
    report.max_diffusion_diff = std::max(report.max_diffusion_diff, pc.diffusion_diff);
    report.max_jump_diff = std::max(report.max_jump_diff, pc.jump_diff);
    report.points.push_back(std::move(pc));
  }
  report.structurally_equal =
      report.max_drift_diff <= tol && report.max_diffusion_diff <= tol && report.max_jump_diff <= tol;
  return report;
}

struct SemigroupEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
  std::size_t used_paths = 0;
  std::size_t exploded_paths = 0;
};

/// (E f(X_t) − f(x))/t from n paths started at x, Euler step t/64.
inline SemigroupEstimate semigroup_estimate(const SdeSystem& system, const ScalarField2& f, const VectorXd& x,
                                            double t, std::size_t n_paths, std::uint64_t seed) {
  if (!(t > 0.0)) throw std::invalid_argument("semigroup_estimate: t must be positive");
  if (n_paths < 2) throw std::invalid_argument("semigroup_estimate: need at least two paths");
  const Grid grid(t, t / 64.0);
  SimulateOptions opts;
  opts.store_steps = {grid.steps()};
  const auto ens = simulate(system.with_initial(x), grid, n_paths, seed, opts);
  const double fx = f.value(x);
  const auto p = static_cast<Eigen::Index>(system.p());
  // Welford accumulation in path order keeps the result thread-count free.
  double mean = 0.0, m2 = 0.0;
  std::size_t n = 0;
  VectorXd y(p);
  for (std::size_t i = 0; i < n_paths; ++i) {
    if (ens.exploded(i)) continue;
    for (Eigen::Index c = 0; c < p; ++c) y(c) = ens.at(i, 0, static_cast<std::size_t>(c));
    const double v = f.value(y) - fx;
    ++n;
    const double delta = v - mean;
    mean += delta / static_cast<double>(n);
    m2 += delta * (v - mean);
  }
  SemigroupEstimate out;
  out.used_paths = n;
  out.exploded_paths = n_paths - n;
  if (n < 2) {
    out.estimate = std::numeric_limits<double>::quiet_NaN();
    out.std_error = std::numeric_limits<double>::quiet_NaN();
    return out;
  }
  const double var = m2 / static_cast<double>(n - 1);
  out.estimate = mean / t;
  out.std_error = std::sqrt(var / static_cast<double>(n)) / t;
  return out;
}

}  // namespace causal_sde
