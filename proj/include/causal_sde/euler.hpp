#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "causal_sde/driver.hpp"
#include "causal_sde/errors.hpp"
#include "causal_sde/intervention.hpp"
#include "causal_sde/parallel.hpp"
#include "causal_sde/rng.hpp"
#include "causal_sde/sem.hpp"
#include "causal_sde/system.hpp"

namespace causal_sde {

/// Uniform grid t_k = kΔ, k = 0..N, N = T/Δ.
class Grid {
 public:
  Grid(double horizon, double delta) : horizon_(horizon), delta_(delta) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) throw std::invalid_argument("grid horizon must be positive");
    if (!(delta > 0.0) || !std::isfinite(delta)) throw std::invalid_argument("grid step must be positive");
    const double ratio = horizon / delta;
    const double rounded = std::round(ratio);
    if (std::abs(ratio - rounded) >= 1e-9 || rounded < 1.0)
      throw std::invalid_argument("horizon must be a positive integer multiple of the step");
    steps_ = static_cast<std::size_t>(rounded);
  }

  double horizon() const { return horizon_; }
  double delta() const { return delta_; }
  std::size_t steps() const { return steps_; }
  double time(std::size_t k) const { return static_cast<double>(k) * delta_; }
  /// Index of the grid point nearest to t; throws unless t is on the grid.
  std::size_t index_of(double t) const {
    const double r = t / delta_;
    const double k = std::round(r);
    if (std::abs(r - k) >= 1e-9 || k < 0.0 || k > static_cast<double>(steps_))
      throw std::invalid_argument("time is not a grid point");
    return static_cast<std::size_t>(k);
  }

 private:
  double horizon_;
  double delta_;
  std::size_t steps_ = 0;
};

/// Monte Carlo paths on a grid. Path i was driven by stream(seed, i, k): step
/// k = 0 draws the initial state, step k ≥ 1 the increment over (t_{k−1}, t_k].
/// Only the grid indices in stored_steps are kept.
struct PathEnsemble {
  static constexpr std::int64_t kNotExploded = -1;

  Grid grid{1.0, 1.0};
  std::vector<std::string> labels;
  std::size_t n_paths = 0;
  std::uint64_t seed = 0;
  std::vector<std::size_t> stored_steps;
  /// n_paths × stored_steps.size() × p, path-major.
  std::vector<double> values;
  /// Grid index of the first non-finite state per path, or kNotExploded.
  std::vector<std::int64_t> exploded_at;

  std::size_t p() const { return labels.size(); }
  std::size_t slots() const { return stored_steps.size(); }
  double& at(std::size_t path, std::size_t slot, std::size_t coord) {
    return values[(path * slots() + slot) * p() + coord];
  }
  double at(std::size_t path, std::size_t slot, std::size_t coord) const {
    return values[(path * slots() + slot) * p() + coord];
  }
  std::size_t slot_of_step(std::size_t k) const {
    const auto it = std::find(stored_steps.begin(), stored_steps.end(), k);
    if (it == stored_steps.end()) throw std::invalid_argument("grid index not stored in ensemble");
    return static_cast<std::size_t>(it - stored_steps.begin());
  }
  bool exploded(std::size_t path) const { return exploded_at[path] != kNotExploded; }
  std::size_t exploded_count() const {
    return static_cast<std::size_t>(
        std::count_if(exploded_at.begin(), exploded_at.end(), [](auto e) { return e != kNotExploded; }));
  }
  double exploded_fraction() const {
    return n_paths == 0 ? 0.0 : static_cast<double>(exploded_count()) / static_cast<double>(n_paths);
  }
  /// Values of one coordinate at one stored slot over the non-exploded paths.
  std::vector<double> column(std::size_t slot, std::size_t coord) const {
    std::vector<double> out;
    out.reserve(n_paths);
    for (std::size_t i = 0; i < n_paths; ++i)
      if (!exploded(i)) out.push_back(at(i, slot, coord));
    return out;
  }
};

struct SimulateOptions {
  /// Grid indices to keep; empty keeps all of 0..N.
  std::vector<std::size_t> store_steps;
  std::size_t workers = 0;  // 0: worker_count()
};

namespace detail {

inline std::vector<std::size_t> resolve_store(const Grid& grid, const std::vector<std::size_t>& requested) {
  std::vector<std::size_t> out;
  if (requested.empty()) {
    out.resize(grid.steps() + 1);
    for (std::size_t k = 0; k <= grid.steps(); ++k) out[k] = k;
    return out;
  }
  out = requested;
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.back() > grid.steps()) throw std::invalid_argument("stored step beyond grid");
  return out;
}

inline std::vector<std::int64_t> slot_table(const std::vector<std::size_t>& stored, std::size_t steps) {
  std::vector<std::int64_t> slot(steps + 1, -1);
  for (std::size_t s = 0; s < stored.size(); ++s) slot[stored[s]] = static_cast<std::int64_t>(s);
  return slot;
}

/// One Euler step x ← x + a(x)·dz. Row sums are accumulated column by column
/// starting from x_i, the order shared by every route that must agree
/// exactly. Returns false when the new state is not finite or the
/// coefficient left its domain.
inline bool euler_step(const CoefficientField& field, std::span<double> x, std::span<const double> dz,
                       std::span<double> a_buf, std::span<double> next) {
  const std::size_t p = x.size();
  const std::size_t d = dz.size();
  try {
    field.eval_into(x, a_buf);
  } catch (const CoefficientDomainError&) {
    std::fill(x.begin(), x.end(), std::numeric_limits<double>::quiet_NaN());
    return false;
  }
  bool finite = true;
  for (std::size_t i = 0; i < p; ++i) {
    double s = x[i];
    for (std::size_t j = 0; j < d; ++j) s += a_buf[i * d + j] * dz[j];
    next[i] = s;
    finite = finite && std::isfinite(s);
  }
  std::copy(next.begin(), next.end(), x.begin());
  return finite;
}

inline std::size_t workers_or_default(std::size_t w) { return w == 0 ? worker_count() : w; }

}  // namespace detail

/// Runs the Euler recursion from x0 on given increments (N × d, row-major).
/// Writes (N+1) × p states; after the first non-finite state the remaining
/// entries are NaN. Returns the explosion index or kNotExploded.
inline std::int64_t euler_path(const CoefficientField& field, const Grid& grid, std::span<const double> x0,
                               std::span<const double> increments, std::span<double> out) {
  const std::size_t p = field.p();
  const std::size_t d = field.d();
  const std::size_t n = grid.steps();
  if (x0.size() != p || increments.size() != n * d || out.size() != (n + 1) * p)
    throw std::invalid_argument("euler_path: wrong buffer sizes");
  std::vector<double> x(x0.begin(), x0.end()), a(p * d), next(p);
  std::copy(x.begin(), x.end(), out.begin());
  bool finite = std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); });
  if (!finite) {
    std::fill(out.begin(), out.end(), std::numeric_limits<double>::quiet_NaN());
    return 0;
  }
  for (std::size_t k = 1; k <= n; ++k) {
    if (!detail::euler_step(field, x, increments.subspan((k - 1) * d, d), a, next)) {
      std::fill(out.begin() + static_cast<std::ptrdiff_t>(k * p), out.end(), std::numeric_limits<double>::quiet_NaN());
      return static_cast<std::int64_t>(k);
    }
    std::copy(x.begin(), x.end(), out.begin() + static_cast<std::ptrdiff_t>(k * p));
  }
  return PathEnsemble::kNotExploded;
}

/// Euler ensembles of several systems fed by one increment array per path.
/// All drivers must be identical; the systems may differ in dimension.
inline std::vector<PathEnsemble> simulate_shared(const std::vector<SdeSystem>& systems, const Grid& grid,
                                                 std::size_t n_paths, std::uint64_t seed,
                                                 const SimulateOptions& opts = {}) {
  if (systems.empty()) throw std::invalid_argument("simulate_shared: no systems");
  const LevyTriplet& driver = systems.front().driver();
  for (const auto& s : systems)
    if (!(s.driver() == driver)) throw std::invalid_argument("simulate_shared: driver mismatch");
  const std::size_t d = static_cast<std::size_t>(driver.dim());
  const std::size_t n = grid.steps();
  const auto stored = detail::resolve_store(grid, opts.store_steps);
  const auto slot = detail::slot_table(stored, n);

  std::vector<PathEnsemble> out(systems.size());
  for (std::size_t s = 0; s < systems.size(); ++s) {
    auto& e = out[s];
    e.grid = grid;
    e.labels = systems[s].labels();
    e.n_paths = n_paths;
    e.seed = seed;
    e.stored_steps = stored;
    e.values.assign(n_paths * stored.size() * systems[s].p(), std::numeric_limits<double>::quiet_NaN());
    e.exploded_at.assign(n_paths, PathEnsemble::kNotExploded);
  }

  const IncrementSampler prototype(driver, grid.delta());
  parallel_for(
      n_paths,
      [&](std::size_t begin, std::size_t end) {
        IncrementSampler sampler = prototype;
        std::vector<double> dz(d);
        struct State {
          std::vector<double> x, a, next;
          bool alive = true;
        };
        std::vector<State> states(systems.size());
        for (std::size_t s = 0; s < systems.size(); ++s) {
          const std::size_t p = systems[s].p();
          states[s].x.resize(p);
          states[s].a.resize(p * d);
          states[s].next.resize(p);
        }
        auto store = [&](std::size_t s, std::size_t path, std::size_t k) {
          if (slot[k] < 0) return;
          auto& e = out[s];
          const std::size_t p = e.p();
          for (std::size_t i = 0; i < p; ++i) e.at(path, static_cast<std::size_t>(slot[k]), i) = states[s].x[i];
        };
        for (std::size_t path = begin; path < end; ++path) {
          for (std::size_t s = 0; s < systems.size(); ++s) {
            Stream init(seed, path, 0);
            systems[s].sample_initial(init, states[s].x);
            states[s].alive = std::all_of(states[s].x.begin(), states[s].x.end(),
                                          [](double v) { return std::isfinite(v); });
            if (states[s].alive) {
              store(s, path, 0);
            } else {
              out[s].exploded_at[path] = 0;
            }
          }
          for (std::size_t k = 1; k <= n; ++k) {
            Stream stream(seed, path, static_cast<std::uint32_t>(k));
            sampler.draw(stream, dz);
            for (std::size_t s = 0; s < systems.size(); ++s) {
              auto& st = states[s];
              if (!st.alive) continue;
              if (!detail::euler_step(systems[s].coeff(), st.x, dz, st.a, st.next)) {
                st.alive = false;
                out[s].exploded_at[path] = static_cast<std::int64_t>(k);
                continue;
              }
              store(s, path, k);
            }
          }
        }
      },
      detail::workers_or_default(opts.workers));
  return out;
}

/// Euler ensemble of one system; path i uses stream(seed, i, ·).
inline PathEnsemble simulate(const SdeSystem& system, const Grid& grid, std::size_t n_paths, std::uint64_t seed,
                             const SimulateOptions& opts = {}) {
  return std::move(simulate_shared({system}, grid, n_paths, seed, opts).front());
}

/// Euler SEM: vertex (k, i) has index k·p + i. Noise variable 0 is the
/// initial state X_0 (read by layer 0); noise variable k ≥ 1 is the increment
/// Z_{t_k} − Z_{t_{k−1}}, shared by all coordinates of layer k.
struct EulerSem {
  Grid grid;
  std::size_t p = 0;
  std::size_t d = 0;
  SignatureGraph signature;
  SemModel sem;

  std::size_t vertex(std::size_t k, std::size_t i) const { return k * p + i; }
  std::size_t layer_of(std::size_t v) const { return v / p; }
  std::size_t coord_of(std::size_t v) const { return v % p; }
  /// Edges between two consecutive layers.
  std::size_t per_layer_edges() const {
    std::size_t n = 0;
    for (std::size_t i = 0; i < p; ++i)
      for (std::size_t j = 0; j < p; ++j)
        if (i == j || signature.has_edge(i, j)) ++n;
    return n;
  }
};

inline EulerSem build_euler_sem(const SdeSystem& system, const Grid& grid, const ProbeOptions& probe = {}) {
  const std::size_t p = system.p();
  const std::size_t d = system.d();
  const std::size_t n = grid.steps();
  SignatureGraph sig = resolve_signature(system, probe);

  std::vector<SemVertex> vertices((n + 1) * p);
  std::vector<std::size_t> noise_dims(n + 1, d);
  noise_dims[0] = p;
  for (std::size_t i = 0; i < p; ++i) {
    auto& v = vertices[i];
    v.name = system.labels()[i] + "@0";
    v.noise = 0;
    v.relationship = std::make_shared<const Relationship>(
        [i](std::span<const double>, std::span<const double> x0) { return x0[i]; });
  }
  const CoefficientField field = system.coeff();
  for (std::size_t i = 0; i < p; ++i) {
    std::vector<std::size_t> parent_coords;
    for (std::size_t j = 0; j < p; ++j)
      if (j == i || sig.has_edge(j, i)) parent_coords.push_back(j);
    // Same relationship object for every layer; only parents and noise differ.
    auto rel = std::make_shared<const Relationship>(
        [field, parent_coords, i, p, d](std::span<const double> parents, std::span<const double> dz) {
          detail::Scratch<32> x(p);
          std::fill(x.data(), x.data() + p, 0.0);
          for (std::size_t l = 0; l < parent_coords.size(); ++l) x[parent_coords[l]] = parents[l];
          detail::Scratch<128> a(p * d);
          try {
            field.eval_into(x.span(), a.span());
          } catch (const CoefficientDomainError&) {
            return std::numeric_limits<double>::quiet_NaN();
          }
          double s = x[i];
          for (std::size_t j = 0; j < d; ++j) s += a[i * d + j] * dz[j];
          return s;
        });
    for (std::size_t k = 1; k <= n; ++k) {
      auto& v = vertices[k * p + i];
      v.name = system.labels()[i] + "@" + std::to_string(k);
      v.noise = k;
      v.relationship = rel;
      for (auto j : parent_coords) v.parents.push_back((k - 1) * p + j);
    }
  }
  return {grid, p, d, std::move(sig), SemModel(std::move(vertices), std::move(noise_dims))};
}

/// Re-inserts coordinate m with value ζ(Y_t^{−m}) at every stored time.
inline PathEnsemble full_process_lift(const PathEnsemble& reduced, const InterventionSpec& spec,
                                      const std::string& label = {}) {
  if (spec.kind == InterventionSpec::TargetKind::integrator) throw IntegratorInterventionError();
  const std::size_t q = reduced.p();
  const std::size_t m = spec.target;
  if (m > q) throw std::invalid_argument("intervention target out of range");
  PathEnsemble out;
  out.grid = reduced.grid;
  out.labels = reduced.labels;
  out.labels.insert(out.labels.begin() + static_cast<std::ptrdiff_t>(m),
                    label.empty() ? "x" + std::to_string(m + 1) : label);
  out.n_paths = reduced.n_paths;
  out.seed = reduced.seed;
  out.stored_steps = reduced.stored_steps;
  out.exploded_at = reduced.exploded_at;
  out.values.resize(reduced.n_paths * reduced.slots() * (q + 1));
  std::vector<double> y(q);
  for (std::size_t path = 0; path < reduced.n_paths; ++path)
    for (std::size_t s = 0; s < reduced.slots(); ++s) {
      for (std::size_t i = 0; i < q; ++i) y[i] = reduced.at(path, s, i);
      detail::insert_coordinate(y, m, spec.zeta(y),
                                std::span<double>(&out.at(path, s, 0), q + 1));
    }
  return out;
}

struct CommutationReport {
  double max_abs_diff = 0.0;
  std::size_t n_paths = 0;
  std::size_t compared_values = 0;
  std::size_t exploded_paths = 0;
  /// Paths where one route produced a finite value and the other did not.
  std::size_t finiteness_mismatches = 0;
  double tol = 1e-12;
  bool passed = false;
};

/// Route A: Euler SEM of the system with (X_{t_k})^m := ζ((X_{t_k})^{−m}) for
/// every k, evaluated on sampled noise. Route B: Euler scheme of the
/// postintervention system on the same noise. Compares coordinates i ≠ m.
inline CommutationReport check_commutation(const SdeSystem& system, const InterventionSpec& spec, const Grid& grid,
                                           std::size_t n_paths, std::uint64_t seed, double tol = 1e-12) {
  detail::check_spec(spec, system.p());
  const std::size_t p = system.p();
  const std::size_t d = system.d();
  const std::size_t n = grid.steps();
  const std::size_t m = spec.target;

  const EulerSem euler = build_euler_sem(system, grid);
  std::vector<SemAssignment> assignments;
  for (std::size_t k = 0; k <= n; ++k) {
    SemAssignment a;
    a.target = euler.vertex(k, m);
    for (std::size_t j = 0; j < p; ++j)
      if (j != m) a.inputs.push_back(euler.vertex(k, j));
    a.zeta = [zeta = spec.zeta](std::span<const double> rest) { return zeta(rest); };
    assignments.push_back(std::move(a));
  }
  const SemModel intervened_sem = intervene_sem(euler.sem, assignments);
  const SdeSystem reduced = intervene_sde(system, spec);

  struct PathResult {
    double max_diff = 0.0;
    std::size_t compared = 0;
    bool exploded = false;
    bool mismatch = false;
  };
  std::vector<PathResult> results(n_paths);
  const IncrementSampler prototype(system.driver(), grid.delta());

  parallel_for(n_paths, [&](std::size_t begin, std::size_t end) {
    IncrementSampler sampler = prototype;
    std::vector<double> x0(p), y0(p - 1), incs(n * d), sem_values((n + 1) * p), route_b((n + 1) * (p - 1));
    for (std::size_t path = begin; path < end; ++path) {
      Stream init(seed, path, 0);
      system.sample_initial(init, x0);
      for (std::size_t k = 1; k <= n; ++k) {
        Stream stream(seed, path, static_cast<std::uint32_t>(k));
        sampler.draw(stream, std::span<double>(incs).subspan((k - 1) * d, d));
      }
      std::vector<std::span<const double>> noise(n + 1);
      noise[0] = x0;
      for (std::size_t k = 1; k <= n; ++k) noise[k] = std::span<const double>(incs).subspan((k - 1) * d, d);
      intervened_sem.evaluate(noise, sem_values);

      for (std::size_t j = 0, r = 0; j < p; ++j)
        if (j != m) y0[r++] = x0[j];
      const auto exploded = euler_path(reduced.coeff(), grid, y0, incs, route_b);

      PathResult& res = results[path];
      res.exploded = exploded != PathEnsemble::kNotExploded;
      for (std::size_t k = 0; k <= n; ++k)
        for (std::size_t j = 0, r = 0; j < p; ++j) {
          if (j == m) continue;
          const double a = sem_values[k * p + j];
          const double b = route_b[k * (p - 1) + r++];
          const bool fa = std::isfinite(a);
          const bool fb = std::isfinite(b);
          if (!fa) res.exploded = true;
          if (fa != fb) {
            // Route B freezes after a blow-up; route A keeps propagating.
            if (fa && exploded != PathEnsemble::kNotExploded && k >= static_cast<std::size_t>(exploded)) continue;
            res.mismatch = true;
            continue;
          }
          if (!fa) continue;
          res.max_diff = std::max(res.max_diff, std::abs(a - b));
          ++res.compared;
        }
    }
  });

  CommutationReport report;
  report.n_paths = n_paths;
  report.tol = tol;
  for (const auto& r : results) {
    report.max_abs_diff = std::max(report.max_abs_diff, r.max_diff);
    report.compared_values += r.compared;
    report.exploded_paths += r.exploded ? 1 : 0;
    report.finiteness_mismatches += r.mismatch ? 1 : 0;
  }
  report.passed = report.max_abs_diff <= tol && report.finiteness_mismatches == 0;
  return report;
}

/// Exact solution at time t given the driver value Z_t and X_0.
using ExactOracle = std::function<VectorXd(double t, const VectorXd& z_t, const VectorXd& x0)>;

struct ConvergenceRow {
  double delta = 0.0;
  double rms_sup_error = 0.0;
};

struct ConvergenceTable {
  std::vector<ConvergenceRow> rows;
  /// Least-squares slope of log RMS against log Δ; absent when fewer than
  /// two rows have positive error.
  std::optional<double> slope;
  bool monotone = true;
  std::size_t n_paths = 0;
  std::size_t exploded_paths = 0;
  bool exact_reference = false;
};

/// Strong error of the Euler scheme on nested dyadic grids. Coarse increments
/// are sums of the finest increments, so every level shares one probability
/// space. Without an exact oracle the finest level is the reference and is
/// not listed.
inline ConvergenceTable convergence_study(const SdeSystem& system, const std::optional<ExactOracle>& exact,
                                          std::vector<double> deltas, double horizon, std::size_t n_paths,
                                          std::uint64_t seed, double monotone_slack = 0.05) {
  if (deltas.empty()) throw std::invalid_argument("convergence_study: no step sizes");
  std::sort(deltas.begin(), deltas.end(), std::greater<>());
  const Grid fine(horizon, deltas.back());
  std::vector<std::size_t> factors;
  for (double delta : deltas) {
    const Grid g(horizon, delta);
    if (fine.steps() % g.steps() != 0) throw std::invalid_argument("step sizes must be nested refinements");
    factors.push_back(fine.steps() / g.steps());
  }
  const std::size_t levels = deltas.size();
  const std::size_t d = system.d();
  const std::size_t p = system.p();
  const std::size_t nf = fine.steps();

  struct PathResult {
    std::vector<double> sup_err;
    bool exploded = false;
  };
  std::vector<PathResult> results(n_paths);
  const IncrementSampler prototype(system.driver(), fine.delta());

  parallel_for(n_paths, [&](std::size_t begin, std::size_t end) {
    IncrementSampler sampler = prototype;
    std::vector<double> x0(p), fine_incs(nf * d);
    std::vector<std::vector<double>> paths(levels);
    for (std::size_t path = begin; path < end; ++path) {
      PathResult& res = results[path];
      res.sup_err.assign(levels, 0.0);
      Stream init(seed, path, 0);
      system.sample_initial(init, x0);
      for (std::size_t k = 1; k <= nf; ++k) {
        Stream stream(seed, path, static_cast<std::uint32_t>(k));
        sampler.draw(stream, std::span<double>(fine_incs).subspan((k - 1) * d, d));
      }
      for (std::size_t l = 0; l < levels; ++l) {
        const std::size_t f = factors[l];
        const std::size_t nc = nf / f;
        std::vector<double> coarse(nc * d, 0.0);
        for (std::size_t k = 0; k < nc; ++k)
          for (std::size_t s = 0; s < f; ++s)
            for (std::size_t j = 0; j < d; ++j) coarse[k * d + j] += fine_incs[(k * f + s) * d + j];
        paths[l].assign((nc + 1) * p, 0.0);
        const Grid g(horizon, deltas[l]);
        if (euler_path(system.coeff(), g, x0, coarse, paths[l]) != PathEnsemble::kNotExploded) res.exploded = true;
      }
      if (res.exploded) continue;
      // Driver values Z_t on the fine grid for the exact oracle.
      std::vector<VectorXd> z;
      if (exact) {
        z.assign(nf + 1, VectorXd::Zero(static_cast<Eigen::Index>(d)));
        for (std::size_t k = 1; k <= nf; ++k)
          for (std::size_t j = 0; j < d; ++j)
            z[k](static_cast<Eigen::Index>(j)) = z[k - 1](static_cast<Eigen::Index>(j)) + fine_incs[(k - 1) * d + j];
      }
      const VectorXd x0v = Eigen::Map<const VectorXd>(x0.data(), static_cast<Eigen::Index>(p));
      for (std::size_t l = 0; l < levels; ++l) {
        const std::size_t f = factors[l];
        const std::size_t nc = nf / f;
        double sup = 0.0;
        for (std::size_t k = 0; k <= nc; ++k) {
          const std::size_t kf = k * f;
          for (std::size_t i = 0; i < p; ++i) {
            double ref;
            if (exact) {
              ref = (*exact)(fine.time(kf), z[kf], x0v)(static_cast<Eigen::Index>(i));
            } else {
              ref = paths[levels - 1][kf * p + i];
            }
            sup = std::max(sup, std::abs(paths[l][k * p + i] - ref));
          }
        }
        res.sup_err[l] = sup;
      }
    }
  });

  ConvergenceTable table;
  table.n_paths = n_paths;
  table.exact_reference = exact.has_value();
  std::vector<double> sum_sq(levels, 0.0);
  std::size_t used = 0;
  for (const auto& r : results) {
    if (r.exploded) {
      ++table.exploded_paths;
      continue;
    }
    ++used;
    for (std::size_t l = 0; l < levels; ++l) sum_sq[l] += r.sup_err[l] * r.sup_err[l];
  }
  const std::size_t listed = exact ? levels : levels - 1;
  for (std::size_t l = 0; l < listed; ++l)
    table.rows.push_back({deltas[l], used == 0 ? std::numeric_limits<double>::quiet_NaN()
                                                : std::sqrt(sum_sq[l] / static_cast<double>(used))});
  std::vector<std::pair<double, double>> pts;
  for (const auto& row : table.rows)
    if (row.rms_sup_error > 0.0 && std::isfinite(row.rms_sup_error))
      pts.emplace_back(std::log(row.delta), std::log(row.rms_sup_error));
  if (pts.size() >= 2) {
    double mx = 0.0, my = 0.0;
    for (auto [x, y] : pts) {
      mx += x;
      my += y;
    }
    mx /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    double sxy = 0.0, sxx = 0.0;
    for (auto [x, y] : pts) {
      sxy += (x - mx) * (y - my);
      sxx += (x - mx) * (x - mx);
    }
    table.slope = sxy / sxx;
  }
  for (std::size_t l = 1; l < table.rows.size(); ++l)
    if (table.rows[l].rms_sup_error > (1.0 + monotone_slack) * table.rows[l - 1].rms_sup_error)
      table.monotone = false;
  return table;
}

}  // namespace causal_sde
