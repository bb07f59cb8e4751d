#pragma once

#include <Eigen/Dense>

#include <array>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "causal_sde/errors.hpp"
#include "causal_sde/expression.hpp"
#include "causal_sde/system.hpp"

namespace causal_sde {

namespace detail {

/// Scratch buffer that stays on the stack for small sizes.
template <std::size_t Inline>
class Scratch {
 public:
  explicit Scratch(std::size_t n) : n_(n) {
    if (n > Inline) heap_.resize(n);
  }
  double* data() { return n_ > Inline ? heap_.data() : stack_.data(); }
  std::span<double> span() { return {data(), n_}; }
  double& operator[](std::size_t i) { return data()[i]; }

 private:
  std::size_t n_;
  std::array<double, Inline> stack_;
  std::vector<double> heap_;
};

/// x = y with value inserted at position m.
inline void insert_coordinate(std::span<const double> y, std::size_t m, double value, std::span<double> x) {
  for (std::size_t i = 0, k = 0; i < x.size(); ++i) x[i] = (i == m) ? value : y[k++];
}

inline VectorXd drop_coordinate(const VectorXd& x, std::size_t m) {
  VectorXd out(x.size() - 1);
  for (Eigen::Index i = 0, k = 0; i < x.size(); ++i)
    if (static_cast<std::size_t>(i) != m) out(k++) = x(i);
  return out;
}

inline MatrixXd drop_row_col(const MatrixXd& a, std::size_t m) {
  const Eigen::Index n = a.rows() - 1;
  MatrixXd out(n, n);
  for (Eigen::Index i = 0, r = 0; i < a.rows(); ++i) {
    if (static_cast<std::size_t>(i) == m) continue;
    for (Eigen::Index j = 0, c = 0; j < a.cols(); ++j) {
      if (static_cast<std::size_t>(j) == m) continue;
      out(r, c++) = a(i, j);
    }
    ++r;
  }
  return out;
}

}  // namespace detail

/// Intervention law ζ: a constant, or a pure map of the remaining p−1
/// coordinates (given in order with coordinate m removed).
class ZetaLaw {
 public:
  using Fn = std::function<double(std::span<const double> rest)>;

  static ZetaLaw constant(double value) {
    ZetaLaw z;
    z.constant_ = value;
    z.reads_ = std::set<std::size_t>{};
    std::ostringstream os;
    os.precision(17);
    os << value;
    z.source_ = os.str();
    return z;
  }

  /// reads: indices into the reduced vector the map may depend on; unknown
  /// (nullopt) means any.
  static ZetaLaw function(Fn fn, std::string source, std::optional<std::set<std::size_t>> reads = std::nullopt) {
    ZetaLaw z;
    z.fn_ = std::make_shared<const Fn>(std::move(fn));
    z.source_ = std::move(source);
    z.reads_ = std::move(reads);
    return z;
  }

  /// ζ written over the full system's coordinates x1..xp; x_m itself and
  /// the time variable are not allowed.
  static ZetaLaw from_expression(const Expression& expr, std::size_t p, std::size_t m) {
    const auto vars = expr.variables();
    if (vars.count(m))
      throw ConfigError("intervention value may not reference the intervened coordinate x" + std::to_string(m + 1));
    for (auto v : vars)
      if (v >= p) throw ConfigError("intervention value references x" + std::to_string(v + 1) + " outside the system");
    if (expr.is_constant()) {
      ZetaLaw z = constant(expr(std::span<const double>{}));
      z.source_ = expr.to_string();
      return z;
    }
    std::set<std::size_t> reads;
    for (auto v : vars) reads.insert(v < m ? v : v - 1);
    return function(
        [expr, p, m](std::span<const double> rest) {
          detail::Scratch<32> full(p);
          detail::insert_coordinate(rest, m, 0.0, full.span());
          return expr(full.span());
        },
        expr.to_string(), std::move(reads));
  }

  bool is_constant() const { return constant_.has_value(); }
  double constant_value() const {
    if (!constant_) throw std::logic_error("intervention law is not constant");
    return *constant_;
  }
  const std::string& source() const { return source_; }
  const std::optional<std::set<std::size_t>>& reads() const { return reads_; }

  double operator()(std::span<const double> rest) const { return constant_ ? *constant_ : (*fn_)(rest); }

 private:
  ZetaLaw() = default;
  std::optional<double> constant_;
  std::shared_ptr<const Fn> fn_;
  std::string source_;
  std::optional<std::set<std::size_t>> reads_;
};

/// do(X^m := ζ(X^{-m})). target_kind distinguishes state coordinates from
/// coordinates of the driving process, which cannot be intervened on.
struct InterventionSpec {
  enum class TargetKind { state, integrator };

  std::size_t target = 0;
  ZetaLaw zeta = ZetaLaw::constant(0.0);
  TargetKind kind = TargetKind::state;

  static InterventionSpec on_state(std::size_t m, ZetaLaw zeta) { return {m, std::move(zeta), TargetKind::state}; }
  static InterventionSpec on_integrator(std::size_t j) {
    return {j, ZetaLaw::constant(0.0), TargetKind::integrator};
  }
};

namespace detail {

inline void check_spec(const InterventionSpec& spec, std::size_t p) {
  if (spec.kind == InterventionSpec::TargetKind::integrator) throw IntegratorInterventionError();
  if (spec.target >= p) throw std::invalid_argument("intervention target out of range");
}

inline InitialLaw drop_initial(const InitialLaw& law, std::size_t m) {
  if (const auto* x = std::get_if<VectorXd>(&law)) return drop_coordinate(*x, m);
  const auto& g = std::get<GaussianLaw>(law);
  return GaussianLaw{drop_coordinate(g.mean, m), drop_row_col(g.cov, m)};
}

inline std::vector<std::string> drop_label(std::vector<std::string> labels, std::size_t m) {
  labels.erase(labels.begin() + static_cast<std::ptrdiff_t>(m));
  return labels;
}

}  // namespace detail

/// Postintervention system: b_ij(y) = a_ij(y_1, …, ζ(y), …, y_{p−1}) with ζ(y)
/// at position m, row m removed, X_0 without coordinate m, same driver.
inline SdeSystem intervene_sde(const SdeSystem& system, const InterventionSpec& spec) {
  const std::size_t p = system.p();
  const std::size_t d = system.d();
  detail::check_spec(spec, p);
  if (p < 2) throw std::invalid_argument("intervention needs at least two coordinates");
  const std::size_t m = spec.target;
  const CoefficientField original = system.coeff();
  const ZetaLaw zeta = spec.zeta;

  FieldFn fn = [original, zeta, p, d, m](std::span<const double> y, std::span<double> out) {
    detail::Scratch<32> x(p);
    detail::insert_coordinate(y, m, zeta(y), x.span());
    detail::Scratch<128> full(p * d);
    original.eval_into(x.span(), full.span());
    for (std::size_t i = 0, r = 0; i < p; ++i) {
      if (i == m) continue;
      for (std::size_t j = 0; j < d; ++j) out[r * d + j] = full[i * d + j];
      ++r;
    }
  };

  CoefficientField field(p - 1, d, std::move(fn), original.source(),
                         original.description() + " under do(" + system.labels()[m] + " := " + zeta.source() + ")");
  if (const auto& declared = original.declared_dependence()) {
    SignatureGraph sig = declared->without_vertex(m);
    if (!zeta.is_constant()) {
      for (std::size_t j = 0; j < p; ++j) {
        if (j == m || !declared->has_edge(m, j)) continue;
        const std::size_t rj = j < m ? j : j - 1;
        if (zeta.reads()) {
          for (auto r : *zeta.reads()) sig.add_edge(r, rj);
        } else {
          for (std::size_t r = 0; r + 1 < p; ++r) sig.add_edge(r, rj);
        }
      }
    }
    field.declare_dependence(std::move(sig));
  }
  std::vector<VectorXd> singular;
  for (const auto& s : original.singular_points()) singular.push_back(detail::drop_coordinate(s, m));
  field.set_singular_points(std::move(singular));
  if (original.probe_box()) field.set_probe_box(*original.probe_box());

  return {std::move(field), system.driver(), detail::drop_initial(system.initial(), m),
          detail::drop_label(system.labels(), m)};
}

/// p-dimensional form of a constant intervention: row m of the coefficient is
/// zero and X_0^m = ζ, so coordinate m stays at ζ.
inline SdeSystem embed_constant_intervention(const SdeSystem& system, std::size_t m, const ZetaLaw& zeta) {
  if (!zeta.is_constant()) throw std::invalid_argument("embedding defined only for constant interventions");
  const std::size_t p = system.p();
  const std::size_t d = system.d();
  if (m >= p) throw std::invalid_argument("intervention target out of range");
  const double value = zeta.constant_value();
  const CoefficientField original = system.coeff();

  FieldFn fn = [original, m, d](std::span<const double> x, std::span<double> out) {
    original.eval_into(x, out);
    for (std::size_t j = 0; j < d; ++j) out[m * d + j] = 0.0;
  };
  CoefficientField field(p, d, std::move(fn), original.source(),
                         original.description() + " with " + system.labels()[m] + " held at " + zeta.source());
  if (const auto& declared = original.declared_dependence()) {
    SignatureGraph sig(p);
    for (auto [i, j] : declared->edges())
      if (j != m) sig.add_edge(i, j);
    field.declare_dependence(std::move(sig));
  }
  field.set_singular_points(original.singular_points());
  if (original.probe_box()) field.set_probe_box(*original.probe_box());

  InitialLaw initial = system.initial();
  if (auto* x = std::get_if<VectorXd>(&initial)) {
    (*x)(static_cast<Eigen::Index>(m)) = value;
  } else {
    auto& g = std::get<GaussianLaw>(initial);
    const auto mi = static_cast<Eigen::Index>(m);
    g.mean(mi) = value;
    g.cov.row(mi).setZero();
    g.cov.col(mi).setZero();
  }
  return {std::move(field), system.driver(), std::move(initial), system.labels()};
}

inline SdeSystem embed_constant_intervention(const SdeSystem& system, std::size_t m, double zeta) {
  return embed_constant_intervention(system, m, ZetaLaw::constant(zeta));
}

/// Markov update map x_{k} = G(x_{k−1}, u_k).
using UpdateFn = std::function<VectorXd(const VectorXd& x, const VectorXd& u)>;

/// H_G(y, u)^i = G(insert(y, m, ζ(y)), u)^i for i ≠ m.
inline UpdateFn intervene_update(UpdateFn g, std::size_t p, std::size_t m, ZetaLaw zeta) {
  if (m >= p) throw std::invalid_argument("intervention target out of range");
  return [g = std::move(g), p, m, zeta = std::move(zeta)](const VectorXd& y, const VectorXd& u) {
    if (static_cast<std::size_t>(y.size()) + 1 != p) throw std::invalid_argument("H_G: wrong state dimension");
    VectorXd x(static_cast<Eigen::Index>(p));
    const std::span<const double> ys(y.data(), static_cast<std::size_t>(y.size()));
    detail::insert_coordinate(ys, m, zeta(ys), std::span<double>(x.data(), p));
    return detail::drop_coordinate(g(x, u), m);
  };
}

}  // namespace causal_sde
