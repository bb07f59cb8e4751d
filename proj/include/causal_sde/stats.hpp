#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "causal_sde/parallel.hpp"
#include "causal_sde/rng.hpp"

namespace causal_sde {

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Q_KS(λ) = 2 Σ_{k≥1} (−1)^{k−1} exp(−2k²λ²).
inline double kolmogorov_survival(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  double sign = 1.0;
  for (int k = 1; k <= 200; ++k) {
    const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
    sum += term;
    if (std::abs(term) < 1e-16 * std::abs(sum) || std::abs(term) < 1e-300) break;
    sign = -sign;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value
/// Q_KS((√n_e + 0.12 + 0.11/√n_e)·D), n_e = n m / (n + m).
inline KsResult ks_two_sample(std::vector<double> xs, std::vector<double> ys) {
  if (xs.empty() || ys.empty()) throw std::invalid_argument("ks_two_sample: empty sample");
  std::sort(xs.begin(), xs.end());
  std::sort(ys.begin(), ys.end());
  const double n = static_cast<double>(xs.size());
  const double m = static_cast<double>(ys.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < xs.size() && j < ys.size()) {
    const double v = std::min(xs[i], ys[j]);
    while (i < xs.size() && xs[i] == v) ++i;
    while (j < ys.size() && ys[j] == v) ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / n - static_cast<double>(j) / m));
  }
  const double ne = std::sqrt(n * m / (n + m));
  return {d, kolmogorov_survival((ne + 0.12 + 0.11 / ne) * d)};
}

struct EnergyResult {
  double statistic = 0.0;
  double p_value = 1.0;
  std::size_t n_permutations = 0;
};

namespace detail {

/// Uniform integer in [0, n).
inline std::size_t uniform_index(Stream& s, std::size_t n) {
  return std::min(n - 1, static_cast<std::size_t>(s.uniform() * static_cast<double>(n)));
}

inline void shuffle_labels(std::vector<std::uint8_t>& labels, std::uint64_t seed, std::size_t perm) {
  Stream s(seed ^ kPermutationTag, perm, 0);
  for (std::size_t i = labels.size(); i > 1; --i) std::swap(labels[i - 1], labels[uniform_index(s, i)]);
}

/// Energy statistic n m/(n+m)·(2 E|X−Y| − E|X−X'| − E|Y−Y'|) from the within-
/// and between-group sums of pairwise distances.
inline double energy_from_sums(double sum_xy, double sum_xx, double sum_yy, double n, double m) {
  const double e = 2.0 * sum_xy / (n * m) - 2.0 * sum_xx / (n * n) - 2.0 * sum_yy / (m * m);
  return n * m / (n + m) * e;
}

/// Univariate energy statistic in O(N) on pre-sorted pooled values, with
/// labels[i] = 1 marking group X.
inline double energy_sorted_1d(const std::vector<double>& z, const std::vector<std::uint8_t>& labels, double total_pair_sum,
                               double n, double m) {
  // Σ_{a<b in group} (z_b − z_a) accumulated left to right.
  double within[2] = {0.0, 0.0};
  double prefix[2] = {0.0, 0.0};
  double count[2] = {0.0, 0.0};
  for (std::size_t i = 0; i < z.size(); ++i) {
    const int g = labels[i];
    within[g] += z[i] * count[g] - prefix[g];
    prefix[g] += z[i];
    count[g] += 1.0;
  }
  const double sum_xx = within[1];
  const double sum_yy = within[0];
  const double sum_xy = total_pair_sum - sum_xx - sum_yy;
  return energy_from_sums(sum_xy, sum_xx, sum_yy, n, m);
}

inline bool equal_as_multisets(std::vector<Eigen::VectorXd> a, std::vector<Eigen::VectorXd> b) {
  if (a.size() != b.size()) return false;
  auto less = [](const Eigen::VectorXd& u, const Eigen::VectorXd& v) {
    return std::lexicographical_compare(u.data(), u.data() + u.size(), v.data(), v.data() + v.size());
  };
  std::sort(a.begin(), a.end(), less);
  std::sort(b.begin(), b.end(), less);
  for (std::size_t i = 0; i < a.size(); ++i)
    if (a[i] != b[i]) return false;
  return true;
}

}  // namespace detail

/// Energy distance two-sample test with a permutation null. Permutation k
/// shuffles the pooled labels with stream(seed ^ tag, k, 0), so the p-value
/// is independent of the worker count.
inline EnergyResult energy_distance_test(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b,
                                         std::size_t n_permutations, std::uint64_t seed) {
  if (a.empty() || b.empty()) throw std::invalid_argument("energy_distance_test: empty sample");
  const Eigen::Index dim = a.front().size();
  for (const auto& v : a)
    if (v.size() != dim) throw std::invalid_argument("energy_distance_test: dimension mismatch");
  for (const auto& v : b)
    if (v.size() != dim) throw std::invalid_argument("energy_distance_test: dimension mismatch");

  const std::size_t na = a.size();
  const std::size_t nb = b.size();
  const std::size_t total = na + nb;
  const double n = static_cast<double>(na);
  const double m = static_cast<double>(nb);
  EnergyResult result;
  result.n_permutations = n_permutations;

  if (detail::equal_as_multisets(a, b)) {
    result.statistic = 0.0;
    result.p_value = 1.0;
    return result;
  }

  std::vector<std::uint8_t> labels(total, 0);
  std::vector<double> perm_stats(n_permutations);
  double observed = 0.0;

  if (dim == 1) {
    std::vector<std::pair<double, std::uint8_t>> pooled;
    pooled.reserve(total);
    for (const auto& v : a) pooled.emplace_back(v(0), 1);
    for (const auto& v : b) pooled.emplace_back(v(0), 0);
    std::sort(pooled.begin(), pooled.end());
    std::vector<double> z(total);
    double total_pair_sum = 0.0, prefix = 0.0;
    for (std::size_t i = 0; i < total; ++i) {
      z[i] = pooled[i].first;
      labels[i] = pooled[i].second;
      total_pair_sum += z[i] * static_cast<double>(i) - prefix;
      prefix += z[i];
    }
    observed = detail::energy_sorted_1d(z, labels, total_pair_sum, n, m);
    parallel_for(n_permutations, [&](std::size_t begin, std::size_t end) {
      std::vector<std::uint8_t> local;
      for (std::size_t k = begin; k < end; ++k) {
        local = labels;
        detail::shuffle_labels(local, seed, k);
        perm_stats[k] = detail::energy_sorted_1d(z, local, total_pair_sum, n, m);
      }
    });
  } else {
    // Pairwise distances of the pooled sample, upper triangle row by row.
    std::vector<const Eigen::VectorXd*> pooled;
    pooled.reserve(total);
    for (const auto& v : a) pooled.push_back(&v);
    for (const auto& v : b) pooled.push_back(&v);
    for (std::size_t i = 0; i < na; ++i) labels[i] = 1;
    std::vector<std::size_t> row_start(total);
    std::size_t off = 0;
    for (std::size_t i = 0; i < total; ++i) {
      row_start[i] = off;
      off += total - i - 1;
    }
    std::vector<double> dist(off);
    parallel_for(total, [&](std::size_t begin, std::size_t end) {
      for (std::size_t i = begin; i < end; ++i)
        for (std::size_t j = i + 1; j < total; ++j) dist[row_start[i] + (j - i - 1)] = (*pooled[i] - *pooled[j]).norm();
    });
    auto stat = [&](const std::vector<std::uint8_t>& lab) {
      double sums[3] = {0.0, 0.0, 0.0};  // yy, xy, xx indexed by label sum
      for (std::size_t i = 0; i < total; ++i) {
        const double* row = dist.data() + row_start[i];
        const int li = lab[i];
        for (std::size_t j = i + 1; j < total; ++j) sums[li + lab[j]] += row[j - i - 1];
      }
      return detail::energy_from_sums(sums[1], sums[2], sums[0], n, m);
    };
    observed = stat(labels);
    parallel_for(n_permutations, [&](std::size_t begin, std::size_t end) {
      std::vector<std::uint8_t> local;
      for (std::size_t k = begin; k < end; ++k) {
        local = labels;
        detail::shuffle_labels(local, seed, k);
        perm_stats[k] = stat(local);
      }
    });
  }

  // Equal multisets were handled above; anything left over is rounding.
  result.statistic = std::max(observed, 0.0);
  std::size_t at_least = 0;
  for (double s : perm_stats)
    if (s >= observed) ++at_least;
  result.p_value = static_cast<double>(1 + at_least) / static_cast<double>(1 + n_permutations);
  return result;
}

struct MomentZ {
  double mean_z = 0.0;
  double var_z = 0.0;
};

namespace detail {

struct Moments {
  double mean = 0.0;
  double var = 0.0;   // unbiased
  double m4 = 0.0;    // central fourth moment
  double n = 0.0;
};

inline Moments moments(const std::vector<double>& v) {
  Moments out;
  out.n = static_cast<double>(v.size());
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / out.n;
  double s2 = 0.0, s4 = 0.0;
  for (double x : v) {
    const double c = x - out.mean;
    s2 += c * c;
    s4 += c * c * c * c;
  }
  out.var = s2 / (out.n - 1.0);
  out.m4 = s4 / out.n;
  return out;
}

inline double safe_z(double num, double se) {
  if (num == 0.0) return 0.0;
  return num / se;
}

}  // namespace detail

/// Two-sample z-scores for the mean and variance of each coordinate, using
/// plug-in standard errors (variance SE² = (μ4 − σ⁴)/n per sample).
inline std::vector<MomentZ> moment_compare(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b) {
  if (a.size() < 2 || b.size() < 2) throw std::invalid_argument("moment_compare: need at least two samples each");
  const Eigen::Index dim = a.front().size();
  std::vector<MomentZ> out;
  for (Eigen::Index c = 0; c < dim; ++c) {
    std::vector<double> xa, xb;
    for (const auto& v : a) xa.push_back(v(c));
    for (const auto& v : b) xb.push_back(v(c));
    const auto ma = detail::moments(xa);
    const auto mb = detail::moments(xb);
    MomentZ z;
    z.mean_z = detail::safe_z(ma.mean - mb.mean, std::sqrt(ma.var / ma.n + mb.var / mb.n));
    const double se_va = std::max(0.0, ma.m4 - ma.var * ma.var) / ma.n;
    const double se_vb = std::max(0.0, mb.m4 - mb.var * mb.var) / mb.n;
    z.var_z = detail::safe_z(ma.var - mb.var, std::sqrt(se_va + se_vb));
    out.push_back(z);
  }
  return out;
}

/// Holm step-down thresholds: the test with the r-th smallest p-value
/// (r = 0-based) is compared with α/(n − r) and testing stops at the first
/// non-rejection. Returns per-test (threshold, rejected).
inline std::vector<std::pair<double, bool>> holm(const std::vector<double>& p_values, double alpha) {
  const std::size_t n = p_values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](auto i, auto j) { return p_values[i] < p_values[j]; });
  std::vector<std::pair<double, bool>> out(n);
  bool still_rejecting = true;
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = order[r];
    const double threshold = alpha / static_cast<double>(n - r);
    still_rejecting = still_rejecting && p_values[i] <= threshold;
    out[i] = {threshold, still_rejecting};
  }
  return out;
}

struct TestEntry {
  std::string test;
  std::string coordinate;
  std::vector<double> times;
  double statistic = 0.0;
  double p_value = 1.0;
  double corrected_alpha = 0.0;
  bool rejected = false;
};

struct TestReport {
  std::string test;
  /// Largest per-entry statistic of the test family.
  double statistic = 0.0;
  /// Smallest per-entry p-value.
  std::optional<double> p_value;
  double alpha = 0.01;
  /// Holm threshold applied to the smallest p-value.
  double corrected_alpha = 0.0;
  std::string correction = "holm";
  std::string verdict;
  /// "satisfied" or "violated": whether the compared systems have equal
  /// generators at the probe points.
  std::string hypothesis;
  std::vector<TestEntry> entries;
  std::size_t n_paths = 0;
  std::size_t exploded_a = 0;
  std::size_t exploded_b = 0;

  bool consistent() const { return verdict == "consistent"; }
};

}  // namespace causal_sde
