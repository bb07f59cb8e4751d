#include <gtest/gtest.h>

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>

#include "causal_sde/builtins.hpp"
#include "causal_sde/ou.hpp"
#include "support.hpp"

using namespace causal_sde;
using testing_support::Gen;

namespace {

MatrixXd reference_exp(const MatrixXd& m) { return m.exp(); }

// Composite Simpson rule for ∫₀ᵗ e^{sB} Q e^{sBᵀ} ds.
MatrixXd simpson_gramian(const MatrixXd& b, const MatrixXd& q, double t, int n = 2000) {
  const double h = t / n;
  MatrixXd acc = MatrixXd::Zero(b.rows(), b.cols());
  for (int k = 0; k <= n; ++k) {
    const double w = (k == 0 || k == n) ? 1.0 : (k % 2 == 1 ? 4.0 : 2.0);
    const MatrixXd e = reference_exp(b * (k * h));
    acc += w * e * q * e.transpose();
  }
  return acc * h / 3.0;
}

}  // namespace

TEST(MatrixExp, MatchesReferenceAcrossNorms) {
  Gen g(31);
  for (int trial = 0; trial < 60; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(g.index(5));
    // Norms from 1e-3 to ~20 exercise every Padé degree and scaling.
    const double scale = std::pow(10.0, g.uniform(-3.0, 1.0));
    const MatrixXd a = g.matrix(n, n, scale);
    const MatrixXd ref = reference_exp(a);
    const double rel = (matrix_exp(a) - ref).norm() / ref.norm();
    EXPECT_LE(rel, 1e-12) << "scale " << scale;
  }
}

TEST(MatrixExp, KnownValues) {
  EXPECT_NEAR(matrix_exp(MatrixXd::Constant(1, 1, 1.0))(0, 0), std::exp(1.0), 1e-15);
  // Rotation generator.
  const MatrixXd r = (MatrixXd(2, 2) << 0.0, -1.0, 1.0, 0.0).finished();
  const MatrixXd e = matrix_exp(r);
  EXPECT_NEAR(e(0, 0), std::cos(1.0), 1e-15);
  EXPECT_NEAR(e(1, 0), std::sin(1.0), 1e-15);
  EXPECT_EQ(matrix_exp(MatrixXd::Zero(3, 3)), MatrixXd::Identity(3, 3));
}

TEST(Gramian, MatchesQuadrature) {
  Gen g(32);
  for (int trial = 0; trial < 10; ++trial) {
    const MatrixXd b = g.matrix(3, 3) - 1.5 * MatrixXd::Identity(3, 3);
    const MatrixXd q = g.psd(3, 2);
    const double t = g.uniform(0.2, 2.0);
    const MatrixXd ref = simpson_gramian(b, q, t);
    EXPECT_LE((gramian(b, q, t) - ref).norm() / ref.norm(), 1e-9);
  }
}

TEST(GramianProperty, LyapunovIdentity) {
  // B G + G Bᵀ + Q = e^{tB} Q e^{tBᵀ}.
  Gen g(33);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index n = 1 + static_cast<Eigen::Index>(g.index(4));
    const MatrixXd b = g.matrix(n, n);
    const MatrixXd q = g.psd(n, n);
    const double t = g.uniform(0.1, 1.5);
    const MatrixXd gm = gramian(b, q, t);
    const MatrixXd e = reference_exp(b * t);
    const MatrixXd lhs = b * gm + gm * b.transpose() + q;
    const MatrixXd rhs = e * q * e.transpose();
    EXPECT_LE((lhs - rhs).norm(), 1e-10 * (1.0 + rhs.norm()));
    EXPECT_LE((gm - gm.transpose()).cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(OuTransition, OneDimensionalClosedForm) {
  OuModel m;
  m.level = VectorXd::Constant(1, 0.7);
  m.reversion = MatrixXd::Constant(1, 1, -1.6);
  m.sigma = MatrixXd::Constant(1, 1, 0.9);
  m.initial = VectorXd(VectorXd::Zero(1));
  const double t = 0.8, x = -0.4, theta = 1.6;
  const auto law = ou_transition(m, VectorXd::Constant(1, x), t);
  EXPECT_NEAR(law.mean(0), 0.7 + std::exp(-theta * t) * (x - 0.7), 1e-15);
  EXPECT_NEAR(law.cov(0, 0), 0.81 * (1.0 - std::exp(-2.0 * theta * t)) / (2.0 * theta), 1e-15);
}

TEST(OuMarginal, GaussianInitialLaw) {
  OuModel m = default_ou_model();
  const GaussianLaw init{(VectorXd(2) << 0.3, 0.1).finished(), (MatrixXd(2, 2) << 0.2, 0.05, 0.05, 0.1).finished()};
  m.initial = init;
  const auto law = ou_marginal(m, 0.5);
  const MatrixXd e = reference_exp(m.reversion * 0.5);
  EXPECT_LE((law.cov - (e * init.cov * e.transpose() + gramian(m.reversion, m.sigma * m.sigma.transpose(), 0.5)))
                .cwiseAbs()
                .maxCoeff(),
            1e-14);
}

TEST(OuIntervene, ReducedModelMatchesGenericIntervention) {
  Gen g(34);
  for (int trial = 0; trial < 20; ++trial) {
    OuModel m;
    m.level = g.vector(3, -1, 1);
    m.reversion = g.matrix(3, 3) - 2.0 * MatrixXd::Identity(3, 3);
    m.sigma = g.matrix(3, 2);
    m.initial = VectorXd(g.vector(3, -1, 1));
    const std::size_t target = g.index(3);
    const double zeta = g.uniform(-2, 2);
    const OuModel reduced = ou_intervene(m, target, zeta);
    const auto generic = intervene_sde(ou_to_system(m), InterventionSpec::on_state(target, ZetaLaw::constant(zeta)));
    const auto closed = ou_to_system(reduced);
    for (int k = 0; k < 5; ++k) {
      const VectorXd y = g.vector(2, -2, 2);
      EXPECT_LE((MatrixXd(evaluate_coeff(generic, y)) - MatrixXd(evaluate_coeff(closed, y))).cwiseAbs().maxCoeff(),
                1e-12);
    }
  }
}

TEST(OuIntervene, DefaultModelValues) {
  const OuModel reduced = ou_intervene(default_ou_model(), 0, 2.0);
  // B = [[−1, 0.5], [0.3, −2]], A = 0: drift of x2 is 0.3·2 − 2 x2 = −2(x2 − 0.3).
  EXPECT_NEAR(reduced.level(0), 0.3, 1e-15);
  EXPECT_EQ(reduced.reversion(0, 0), -2.0);
  EXPECT_EQ(reduced.sigma, (MatrixXd(1, 2) << 0.3, 0.5).finished());
}

TEST(OuIntervene, SingularReversionRejected) {
  OuModel m = default_ou_model();
  m.reversion = (MatrixXd(2, 2) << -1.0, 0.5, 0.3, 0.0).finished();
  EXPECT_THROW(ou_intervene(m, 0, 1.0), SingularReversionMatrix);
}

TEST(OuToSystem, DeclaredSignatureFromReversion) {
  OuModel m = default_ou_model();
  m.reversion(0, 1) = 0.0;
  const auto s = ou_to_system(m);
  EXPECT_EQ(*s.coeff().declared_dependence(), SignatureGraph(2, {{0, 0}, {0, 1}, {1, 1}}));
  EXPECT_EQ(resolve_signature(s), *s.coeff().declared_dependence());
}
