#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "causal_sde/builtins.hpp"
#include "causal_sde/identifiability.hpp"
#include "causal_sde/stats.hpp"
#include "support.hpp"

using namespace causal_sde;
using testing_support::Gen;

namespace {

// Direct double sum over all pairs.
double brute_energy(const std::vector<Eigen::VectorXd>& a, const std::vector<Eigen::VectorXd>& b) {
  const double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
  double xy = 0, xx = 0, yy = 0;
  for (const auto& x : a)
    for (const auto& y : b) xy += (x - y).norm();
  for (const auto& x : a)
    for (const auto& y : a) xx += (x - y).norm();
  for (const auto& x : b)
    for (const auto& y : b) yy += (x - y).norm();
  return n * m / (n + m) * (2.0 * xy / (n * m) - xx / (n * n) - yy / (m * m));
}

std::vector<Eigen::VectorXd> sample(Gen& g, std::size_t n, Eigen::Index dim, double shift) {
  std::vector<Eigen::VectorXd> out;
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::VectorXd v(dim);
    for (Eigen::Index k = 0; k < dim; ++k) v(k) = g.normal() + shift;
    out.push_back(v);
  }
  return out;
}

}  // namespace

TEST(Kolmogorov, SurvivalValues) {
  // Reference values from scipy.special.kolmogorov.
  EXPECT_NEAR(kolmogorov_survival(0.5), 0.9639452436648751, 1e-14);
  EXPECT_NEAR(kolmogorov_survival(1.0), 0.26999967167735456, 1e-14);
  EXPECT_NEAR(kolmogorov_survival(1.5), 0.022217962616525127, 1e-14);
  EXPECT_NEAR(kolmogorov_survival(2.0), 0.0006709252557796953, 1e-14);
  EXPECT_EQ(kolmogorov_survival(0.0), 1.0);
}

TEST(KsTwoSample, HandComputedStatistic) {
  const auto r = ks_two_sample({1, 2, 3}, {2.5, 4});
  EXPECT_DOUBLE_EQ(r.statistic, 2.0 / 3.0);
  const auto ties = ks_two_sample({1, 1, 2}, {1, 2, 2});
  EXPECT_DOUBLE_EQ(ties.statistic, 1.0 / 3.0);
  EXPECT_EQ(ks_two_sample({1, 2}, {1, 2}).statistic, 0.0);
  EXPECT_EQ(ks_two_sample({1, 2}, {1, 2}).p_value, 1.0);
  EXPECT_THROW(ks_two_sample({}, {1.0}), std::invalid_argument);
}

TEST(KsTwoSample, DetectsShift) {
  Gen g(1);
  std::vector<double> a, b;
  for (int i = 0; i < 2000; ++i) {
    a.push_back(g.normal());
    b.push_back(g.normal() + 0.3);
  }
  EXPECT_LT(ks_two_sample(a, b).p_value, 1e-6);
}

TEST(EnergyProperty, StatisticMatchesBruteForce) {
  Gen g(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Eigen::Index dim = 1 + static_cast<Eigen::Index>(g.index(3));
    const auto a = sample(g, 10 + g.index(30), dim, 0.0);
    const auto b = sample(g, 10 + g.index(30), dim, g.uniform(0.0, 1.0));
    const auto r = energy_distance_test(a, b, 10, 5);
    EXPECT_NEAR(r.statistic, brute_energy(a, b), 1e-10 * (1.0 + brute_energy(a, b)));
  }
}

TEST(Energy, EqualSamplesGiveZero) {
  Gen g(3);
  const auto a = sample(g, 50, 2, 0.0);
  auto b = a;
  std::reverse(b.begin(), b.end());
  const auto r = energy_distance_test(a, b, 100, 1);
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
}

TEST(Energy, PowerAndDeterminism) {
  Gen g(4);
  const auto a = sample(g, 300, 2, 0.0);
  const auto b = sample(g, 300, 2, 0.4);
  const auto r1 = energy_distance_test(a, b, 199, 9);
  const auto r2 = energy_distance_test(a, b, 199, 9);
  EXPECT_EQ(r1.p_value, r2.p_value);
  EXPECT_EQ(r1.p_value, 1.0 / 200.0);
}

TEST(Holm, StepDown) {
  const auto d = holm({0.01, 0.04, 0.03, 0.005}, 0.05);
  // Sorted: 0.005 (α/4), 0.01 (α/3), 0.03 (α/2), 0.04 (α/1).
  EXPECT_DOUBLE_EQ(d[3].first, 0.0125);
  EXPECT_TRUE(d[3].second);
  EXPECT_DOUBLE_EQ(d[0].first, 0.05 / 3);
  EXPECT_TRUE(d[0].second);
  EXPECT_DOUBLE_EQ(d[2].first, 0.025);
  EXPECT_FALSE(d[2].second);
  EXPECT_FALSE(d[1].second);  // 0.04 ≤ 0.05 but testing stopped.
}

TEST(MomentCompare, ZScores) {
  Gen g(5);
  const auto a = sample(g, 5000, 2, 0.0);
  const auto same = sample(g, 5000, 2, 0.0);
  const auto shifted = sample(g, 5000, 2, 0.5);
  for (const auto& z : moment_compare(a, same)) {
    EXPECT_LT(std::abs(z.mean_z), 4.5);
    EXPECT_LT(std::abs(z.var_z), 4.5);
  }
  EXPECT_GT(std::abs(moment_compare(a, shifted)[0].mean_z), 10.0);
}

TEST(Identifiability, ArgumentChecks) {
  const Builtin b = load_builtin("two-signatures");
  EXPECT_THROW(identifiability_check(b.system, *b.companion, *b.intervention, {1.0}, 999, 0.01, 1, 0.01),
               std::invalid_argument);
  EXPECT_THROW(identifiability_check(b.system, *b.companion, *b.intervention, {}, 1000, 0.01, 1, 0.01),
               std::invalid_argument);
  EXPECT_THROW(identifiability_check(b.system, *b.companion, *b.intervention, {1.0}, 1000, 0.01, 1, 1.5),
               std::invalid_argument);
}

TEST(Identifiability, HypothesisRecorded) {
  const Builtin b = load_builtin("two-signatures");
  EXPECT_TRUE(generator_hypothesis_holds(b.system, *b.companion));
  EXPECT_FALSE(generator_hypothesis_holds(b.system, scale_coefficient(*b.companion, 1.25)));
  EXPECT_FALSE(generator_hypothesis_holds(b.system, b.companion->with_initial(VectorXd(VectorXd::Zero(2)))));
  const auto r = identifiability_check(b.system, *b.companion, *b.intervention, {0.5}, 1000, 0.01, 3, 0.01);
  EXPECT_EQ(r.hypothesis, "satisfied");
  EXPECT_EQ(r.entries.size(), 2u);
  EXPECT_EQ(r.correction, "holm");
}
