#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "causal_sde/driver.hpp"
#include "causal_sde/errors.hpp"
#include "causal_sde/expression.hpp"

namespace causal_sde {

/// p×d coefficient matrix a(x), stored row-major so a row is contiguous.
using CoeffMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Directed graph on coordinates {0..p-1}; edge i→j means some entry of row j
/// of the coefficient depends on coordinate i. Self-loops and cycles allowed.
class SignatureGraph {
 public:
  SignatureGraph() = default;
  explicit SignatureGraph(std::size_t p) : p_(p), adj_(p * p, false) {}
  SignatureGraph(std::size_t p, const std::vector<std::pair<std::size_t, std::size_t>>& edges)
      : SignatureGraph(p) {
    for (auto [i, j] : edges) add_edge(i, j);
  }

  std::size_t size() const { return p_; }

  void add_edge(std::size_t from, std::size_t to) {
    check(from);
    check(to);
    adj_[from * p_ + to] = true;
  }
  bool has_edge(std::size_t from, std::size_t to) const {
    check(from);
    check(to);
    return adj_[from * p_ + to];
  }

  std::vector<std::pair<std::size_t, std::size_t>> edges() const {
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < p_; ++i)
      for (std::size_t j = 0; j < p_; ++j)
        if (adj_[i * p_ + j]) out.emplace_back(i, j);
    return out;
  }
  std::size_t edge_count() const {
    return static_cast<std::size_t>(std::count(adj_.begin(), adj_.end(), true));
  }

  bool is_subgraph_of(const SignatureGraph& other) const {
    if (other.p_ != p_) return false;
    for (std::size_t k = 0; k < adj_.size(); ++k)
      if (adj_[k] && !other.adj_[k]) return false;
    return true;
  }

  /// Graph on the coordinates other than m, renumbered in order.
  SignatureGraph without_vertex(std::size_t m) const {
    check(m);
    SignatureGraph out(p_ - 1);
    for (auto [i, j] : edges())
      if (i != m && j != m) out.add_edge(i < m ? i : i - 1, j < m ? j : j - 1);
    return out;
  }

  friend bool operator==(const SignatureGraph&, const SignatureGraph&) = default;

  std::string to_dot(const std::vector<std::string>& labels, std::string_view name = "signature") const {
    std::ostringstream os;
    os << "digraph " << name << " {\n";
    for (std::size_t i = 0; i < p_; ++i) os << "  \"" << labels.at(i) << "\";\n";
    for (auto [i, j] : edges())
      os << "  \"" << labels.at(i) << "\" -> \"" << labels.at(j) << "\";\n";
    os << "}\n";
    return os.str();
  }

 private:
  void check(std::size_t v) const {
    if (v >= p_) throw std::out_of_range("signature vertex out of range");
  }
  std::size_t p_ = 0;
  std::vector<bool> adj_;
};

/// X^j is locally unaffected by X^i when the signature has no edge i→j.
inline bool is_locally_unaffected(const SignatureGraph& sig, std::size_t i, std::size_t j) {
  return !sig.has_edge(i, j);
}

enum class FieldSource { closure, expression, linear, chem };

inline std::string_view to_string(FieldSource s) {
  switch (s) {
    case FieldSource::closure: return "closure";
    case FieldSource::expression: return "expression";
    case FieldSource::linear: return "linear";
    case FieldSource::chem: return "chem";
  }
  return "unknown";
}

/// Writes a(x) into out (p·d entries, row-major). out is zeroed before the call.
using FieldFn = std::function<void(std::span<const double> x, std::span<double> out)>;

struct ProbeBox {
  double lo = -5.0;
  double hi = 5.0;
};

/// Coefficient field a: R^p → M(p,d). Immutable; evaluation is pure and may be
/// called concurrently.
class CoefficientField {
 public:
  CoefficientField(std::size_t p, std::size_t d, FieldFn fn, FieldSource source = FieldSource::closure,
                   std::string description = {})
      : p_(p), d_(d), fn_(std::make_shared<const FieldFn>(std::move(fn))), source_(source),
        description_(std::move(description)) {
    if (p == 0 || d == 0) throw std::invalid_argument("coefficient field dimensions must be positive");
  }

  std::size_t p() const { return p_; }
  std::size_t d() const { return d_; }
  FieldSource source() const { return source_; }
  const std::string& description() const { return description_; }

  CoefficientField& set_description(std::string text) {
    description_ = std::move(text);
    return *this;
  }
  CoefficientField& declare_dependence(SignatureGraph sig) {
    if (sig.size() != p_) throw std::invalid_argument("declared dependence has wrong size");
    declared_ = std::move(sig);
    return *this;
  }
  CoefficientField& clear_declared_dependence() {
    declared_.reset();
    return *this;
  }
  CoefficientField& set_singular_points(std::vector<VectorXd> points) {
    singular_points_ = std::move(points);
    return *this;
  }
  CoefficientField& set_probe_box(ProbeBox box) {
    probe_box_ = box;
    return *this;
  }

  const std::optional<SignatureGraph>& declared_dependence() const { return declared_; }
  const std::vector<VectorXd>& singular_points() const { return singular_points_; }
  const std::optional<ProbeBox>& probe_box() const { return probe_box_; }

  /// Raw evaluation into a caller buffer of size p·d; no finiteness check.
  void eval_into(std::span<const double> x, std::span<double> out) const {
    std::fill(out.begin(), out.end(), 0.0);
    (*fn_)(x, out);
  }

  CoeffMatrix operator()(std::span<const double> x) const {
    CoeffMatrix out(static_cast<Eigen::Index>(p_), static_cast<Eigen::Index>(d_));
    eval_into(x, std::span<double>(out.data(), p_ * d_));
    return out;
  }
  CoeffMatrix operator()(const VectorXd& x) const {
    return (*this)(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
  }

 private:
  std::size_t p_;
  std::size_t d_;
  std::shared_ptr<const FieldFn> fn_;
  FieldSource source_;
  std::string description_;
  std::optional<SignatureGraph> declared_;
  std::vector<VectorXd> singular_points_;
  std::optional<ProbeBox> probe_box_;
};

struct GaussianLaw {
  VectorXd mean;
  MatrixXd cov;
};

using InitialLaw = std::variant<VectorXd, GaussianLaw>;

inline std::size_t initial_dimension(const InitialLaw& law) {
  if (const auto* x = std::get_if<VectorXd>(&law)) return static_cast<std::size_t>(x->size());
  return static_cast<std::size_t>(std::get<GaussianLaw>(law).mean.size());
}

inline std::vector<std::string> default_labels(std::size_t p) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < p; ++i) out.push_back("x" + std::to_string(i + 1));
  return out;
}

/// dX_t = a(X_{t-}) dZ_t with Z the Lévy process of `driver`.
class SdeSystem {
 public:
  SdeSystem(CoefficientField coeff, LevyTriplet driver, InitialLaw initial,
            std::vector<std::string> labels = {})
      : coeff_(std::move(coeff)), driver_(std::move(driver)), initial_(std::move(initial)),
        labels_(std::move(labels)) {
    if (labels_.empty()) labels_ = default_labels(coeff_.p());
    if (static_cast<Eigen::Index>(coeff_.d()) != driver_.dim())
      throw std::invalid_argument("coefficient columns do not match driver dimension");
    if (initial_dimension(initial_) != coeff_.p())
      throw std::invalid_argument("initial law has wrong dimension");
    if (labels_.size() != coeff_.p()) throw std::invalid_argument("wrong number of labels");
    std::set<std::string> seen(labels_.begin(), labels_.end());
    if (seen.size() != labels_.size()) throw std::invalid_argument("labels must be distinct");
    if (const auto* g = std::get_if<GaussianLaw>(&initial_)) {
      if (g->cov.rows() != g->mean.size() || g->cov.cols() != g->mean.size())
        throw std::invalid_argument("initial covariance has wrong shape");
      initial_factor_ = psd_factor(g->cov);
    }
  }

  std::size_t p() const { return coeff_.p(); }
  std::size_t d() const { return coeff_.d(); }
  const CoefficientField& coeff() const { return coeff_; }
  const LevyTriplet& driver() const { return driver_; }
  const InitialLaw& initial() const { return initial_; }
  const std::vector<std::string>& labels() const { return labels_; }

  std::size_t label_index(std::string_view label) const {
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] == label) return i;
    throw ConfigError("unknown coordinate label '" + std::string(label) + "'");
  }

  SdeSystem with_initial(InitialLaw initial) const {
    return {coeff_, driver_, std::move(initial), labels_};
  }
  SdeSystem with_coeff(CoefficientField coeff) const {
    return {std::move(coeff), driver_, initial_, labels_};
  }

  /// Fills x with an initial state; Gaussian laws draw from the stream.
  void sample_initial(Stream& stream, std::span<double> x) const {
    if (const auto* fixed = std::get_if<VectorXd>(&initial_)) {
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = (*fixed)(static_cast<Eigen::Index>(i));
      return;
    }
    const auto& g = std::get<GaussianLaw>(initial_);
    const Eigen::Index p = g.mean.size();
    VectorXd xi(p);
    for (Eigen::Index i = 0; i < p; ++i) xi(i) = stream.normal();
    const VectorXd v = g.mean + initial_factor_ * xi;
    for (Eigen::Index i = 0; i < p; ++i) x[static_cast<std::size_t>(i)] = v(i);
  }

 private:
  CoefficientField coeff_;
  LevyTriplet driver_;
  InitialLaw initial_;
  std::vector<std::string> labels_;
  MatrixXd initial_factor_;
};

namespace detail {

inline std::string format_point(std::span<const double> x) {
  std::ostringstream os;
  os.precision(17);
  os << '(';
  for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << ')';
  return os.str();
}

}  // namespace detail

/// a(x), rejecting non-finite entries.
inline CoeffMatrix evaluate_coeff(const SdeSystem& system, std::span<const double> x) {
  if (x.size() != system.p()) throw std::invalid_argument("evaluate_coeff: wrong dimension");
  CoeffMatrix a = system.coeff()(x);
  if (!a.allFinite()) throw CoefficientOverflow("coefficient overflow at x=" + detail::format_point(x));
  return a;
}
inline CoeffMatrix evaluate_coeff(const SdeSystem& system, const VectorXd& x) {
  return evaluate_coeff(system, std::span<const double>(x.data(), static_cast<std::size_t>(x.size())));
}

/// Low-discrepancy points in [0,1)^dim from the additive recurrence on the
/// generalized golden ratio (phi_dim^(dim+1) = phi_dim + 1).
inline std::vector<VectorXd> quasi_uniform_points(std::size_t n, std::size_t dim) {
  double phi = 2.0;
  for (int it = 0; it < 64; ++it) phi = std::pow(1.0 + phi, 1.0 / static_cast<double>(dim + 1));
  VectorXd step(static_cast<Eigen::Index>(dim));
  for (std::size_t j = 0; j < dim; ++j) {
    const double v = std::pow(1.0 / phi, static_cast<double>(j + 1));
    step(static_cast<Eigen::Index>(j)) = v - std::floor(v);
  }
  std::vector<VectorXd> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    VectorXd u(static_cast<Eigen::Index>(dim));
    for (Eigen::Index j = 0; j < u.size(); ++j) {
      const double v = 0.5 + static_cast<double>(k + 1) * step(j);
      u(j) = v - std::floor(v);
    }
    out.push_back(std::move(u));
  }
  return out;
}

struct ProbeOptions {
  std::size_t n_points = 256;
  double perturbation = 1e-3;
  double tol = 1e-9;
  /// Defaults to the field's own probe box, else [-5, 5]^p.
  std::optional<ProbeBox> box;
  double singular_exclusion = 1e-3;
};

/// Sample points used for probing: quasi-uniform in the box, skipping a small
/// ball around each declared singular point.
inline std::vector<VectorXd> probe_points(const CoefficientField& field, const ProbeOptions& opts) {
  const ProbeBox box = opts.box ? *opts.box : field.probe_box().value_or(ProbeBox{});
  std::vector<VectorXd> out;
  for (auto& u : quasi_uniform_points(opts.n_points, field.p())) {
    VectorXd x = VectorXd::Constant(u.size(), box.lo) + (box.hi - box.lo) * u;
    bool near_singular = false;
    for (const auto& s : field.singular_points())
      if ((x - s).norm() < opts.singular_exclusion) near_singular = true;
    if (!near_singular) out.push_back(std::move(x));
  }
  return out;
}

/// Edge i→j iff some sampled x and column k give
/// |a_jk(x + h e_i) − a_jk(x)| > tol.
inline SignatureGraph probe_signature(const SdeSystem& system, const ProbeOptions& opts = {}) {
  if (opts.n_points == 0) throw std::invalid_argument("probe_signature: n_points must be >= 1");
  if (!(opts.perturbation > 0.0)) throw std::invalid_argument("probe_signature: perturbation must be > 0");
  if (!(opts.tol >= 0.0)) throw std::invalid_argument("probe_signature: tol must be >= 0");
  const std::size_t p = system.p();
  const std::size_t d = system.d();
  SignatureGraph sig(p);
  for (const auto& x : probe_points(system.coeff(), opts)) {
    const CoeffMatrix base = evaluate_coeff(system, x);
    for (std::size_t i = 0; i < p; ++i) {
      VectorXd shifted = x;
      shifted(static_cast<Eigen::Index>(i)) += opts.perturbation;
      const CoeffMatrix moved = evaluate_coeff(system, shifted);
      for (std::size_t j = 0; j < p; ++j) {
        if (sig.has_edge(i, j)) continue;
        for (std::size_t k = 0; k < d; ++k) {
          const auto r = static_cast<Eigen::Index>(j);
          const auto c = static_cast<Eigen::Index>(k);
          if (std::abs(moved(r, c) - base(r, c)) > opts.tol) {
            sig.add_edge(i, j);
            break;
          }
        }
      }
    }
  }
  return sig;
}

/// The signature used for Euler SEMs: the declared one when present (checked
/// to contain the probed dependence), otherwise the probed one.
inline SignatureGraph resolve_signature(const SdeSystem& system, const ProbeOptions& opts = {}) {
  SignatureGraph probed = probe_signature(system, opts);
  if (const auto& declared = system.coeff().declared_dependence()) {
    if (!probed.is_subgraph_of(*declared))
      throw std::invalid_argument("declared signature misses dependence found by probing");
    return *declared;
  }
  return probed;
}

/// Same system with the coefficient multiplied by factor (all columns).
inline SdeSystem scale_coefficient(const SdeSystem& system, double factor) {
  const CoefficientField original = system.coeff();
  FieldFn fn = [original, factor](std::span<const double> x, std::span<double> out) {
    original.eval_into(x, out);
    for (auto& v : out) v *= factor;
  };
  std::ostringstream os;
  os << original.description() << " scaled by " << factor;
  CoefficientField field(original.p(), original.d(), std::move(fn), original.source(), os.str());
  if (original.declared_dependence()) field.declare_dependence(*original.declared_dependence());
  field.set_singular_points(original.singular_points());
  if (original.probe_box()) field.set_probe_box(*original.probe_box());
  return system.with_coeff(std::move(field));
}

/// Drift+diffusion system for a reaction network with stoichiometry S (p×R)
/// and rates λ(x) (R expressions). The driver is time plus R Brownian
/// motions; row i of a(x) is (Σ_r S_ir λ_r(x), S_i1 √λ_1(x), …, S_iR √λ_R(x)).
inline SdeSystem build_chem_system(const Eigen::MatrixXi& stoich, std::vector<Expression> rates,
                                   VectorXd x0, std::vector<std::string> labels = {}) {
  const auto p = static_cast<std::size_t>(stoich.rows());
  const auto r_count = static_cast<std::size_t>(stoich.cols());
  if (rates.size() != r_count) throw std::invalid_argument("one rate expression per reaction required");
  if (static_cast<std::size_t>(x0.size()) != p) throw std::invalid_argument("x0 has wrong dimension");
  const MatrixXd s = stoich.cast<double>();
  const std::size_t d = r_count + 1;
  FieldFn fn = [s, rates = std::move(rates), p, r_count, d](std::span<const double> x, std::span<double> out) {
    double lambda_buf[64];
    std::vector<double> heap;
    double* lambda = lambda_buf;
    if (r_count > 64) {
      heap.resize(r_count);
      lambda = heap.data();
    }
    for (std::size_t r = 0; r < r_count; ++r) {
      lambda[r] = rates[r](x);
      if (lambda[r] < 0.0)
        throw CoefficientDomainError("rate negative at x=" + detail::format_point(x));
    }
    for (std::size_t i = 0; i < p; ++i) {
      double drift = 0.0;
      for (std::size_t r = 0; r < r_count; ++r) {
        const double sir = s(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(r));
        drift += sir * lambda[r];
        out[i * d + 1 + r] = sir * std::sqrt(lambda[r]);
      }
      out[i * d] = drift;
    }
  };
  CoefficientField field(p, d, std::move(fn), FieldSource::chem, "reaction network S·λ(x) with S·diag(√λ(x))");
  field.set_probe_box({1e-3, 5.0});
  return {std::move(field), LevyTriplet::time_and_brownian(static_cast<Eigen::Index>(r_count)),
          std::move(x0), std::move(labels)};
}

}  // namespace causal_sde
