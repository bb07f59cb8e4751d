#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "causal_sde/builtins.hpp"
#include "causal_sde/intervention.hpp"
#include "causal_sde/sem.hpp"
#include "support.hpp"

using namespace causal_sde;
using testing_support::Gen;

namespace {

VectorXd insert(const VectorXd& y, std::size_t m, double v) {
  VectorXd x(y.size() + 1);
  for (Eigen::Index i = 0, r = 0; i < x.size(); ++i) x(i) = static_cast<std::size_t>(i) == m ? v : y(r++);
  return x;
}

MatrixXd drop_row(const CoeffMatrix& a, std::size_t m) {
  MatrixXd out(a.rows() - 1, a.cols());
  for (Eigen::Index i = 0, r = 0; i < a.rows(); ++i)
    if (static_cast<std::size_t>(i) != m) out.row(r++) = a.row(i);
  return out;
}

Relationship sum_relationship() {
  return [](std::span<const double> parents, std::span<const double> noise) {
    double s = 0.0;
    for (double v : parents) s += v;
    for (double v : noise) s += v;
    return s;
  };
}

}  // namespace

TEST(InterventionProperty, ReducedFieldIsSubstitutionAndDeletion) {
  Gen g(17);
  for (const char* name : {"chem", "ou", "two-signatures", "levy-2d", "ito-counterexample"}) {
    const Builtin b = load_builtin(name);
    const std::size_t p = b.system.p();
    for (std::size_t m = 0; m < p; ++m) {
      const double zeta = g.uniform(0.1, 2.0);
      const auto post = intervene_sde(b.system, InterventionSpec::on_state(m, ZetaLaw::constant(zeta)));
      ASSERT_EQ(post.p(), p - 1);
      ASSERT_EQ(post.d(), b.system.d());
      ASSERT_TRUE(post.driver() == b.system.driver());
      for (int trial = 0; trial < 20; ++trial) {
        const VectorXd y = g.vector(static_cast<Eigen::Index>(p - 1), 0.05, 3.0);
        const MatrixXd expected = drop_row(evaluate_coeff(b.system, insert(y, m, zeta)), m);
        ASSERT_EQ((MatrixXd(evaluate_coeff(post, y)) - expected).cwiseAbs().maxCoeff(), 0.0) << name;
      }
    }
  }
}

TEST(Intervention, NonConstantZetaFromExpression) {
  const Builtin b = load_builtin("levy-2d");
  ParseOptions opts;
  opts.dimension = 2;
  const auto zeta = ZetaLaw::from_expression(parse_expression("2*x2 + 1", opts), 2, 0);
  EXPECT_FALSE(zeta.is_constant());
  const auto post = intervene_sde(b.system, InterventionSpec::on_state(0, zeta));
  const VectorXd y = VectorXd::Constant(1, 0.4);
  const MatrixXd expected = drop_row(evaluate_coeff(b.system, insert(y, 0, 1.8)), 0);
  EXPECT_EQ((MatrixXd(evaluate_coeff(post, y)) - expected).cwiseAbs().maxCoeff(), 0.0);
}

TEST(Intervention, ZetaMayNotReadTarget) {
  ParseOptions opts;
  EXPECT_THROW(ZetaLaw::from_expression(parse_expression("x1 + 1", opts), 2, 0), ConfigError);
  EXPECT_THROW(ZetaLaw::from_expression(parse_expression("x3", opts), 2, 0), ConfigError);
}

TEST(Intervention, IntegratorTargetsRejected) {
  EXPECT_THROW(intervene_sde(chem_system(), InterventionSpec::on_integrator(0)), IntegratorInterventionError);
}

TEST(Intervention, NeedsTwoCoordinates) {
  EXPECT_THROW(intervene_sde(gbm_system(), InterventionSpec::on_state(0, ZetaLaw::constant(1.0))),
               std::invalid_argument);
  EXPECT_THROW(intervene_sde(chem_system(), InterventionSpec::on_state(2, ZetaLaw::constant(1.0))),
               std::invalid_argument);
}

TEST(Intervention, LabelsAndInitialAreProjected) {
  const auto post = intervene_sde(chem_system(), InterventionSpec::on_state(1, ZetaLaw::constant(1.0)));
  EXPECT_EQ(post.labels(), std::vector<std::string>{"X"});
  EXPECT_EQ(std::get<VectorXd>(post.initial()), VectorXd::Ones(1));
}

TEST(Intervention, DeclaredSignatureProjectedWithZetaReads) {
  const auto ou = ou_to_system(default_ou_model());
  // Constant ζ: the induced subgraph.
  const auto post = intervene_sde(ou, InterventionSpec::on_state(0, ZetaLaw::constant(2.0)));
  EXPECT_EQ(*post.coeff().declared_dependence(), ou.coeff().declared_dependence()->without_vertex(0));
}

TEST(Intervention, EmbeddingHoldsCoordinate) {
  const auto s = chem_system();
  const auto e = embed_constant_intervention(s, 1, 1.5);
  EXPECT_EQ(std::get<VectorXd>(e.initial())(1), 1.5);
  const CoeffMatrix a = evaluate_coeff(e, VectorXd((VectorXd(2) << 0.7, 1.5).finished()));
  EXPECT_EQ(a.row(1).cwiseAbs().maxCoeff(), 0.0);
  ParseOptions opts;
  EXPECT_THROW(embed_constant_intervention(s, 1, ZetaLaw::from_expression(parse_expression("x1", opts), 2, 1)),
               std::invalid_argument);
}

TEST(Intervention, UpdateMap) {
  UpdateFn g = [](const VectorXd& x, const VectorXd& u) { return VectorXd(x * 2.0 + u); };
  const auto h = intervene_update(g, 3, 1, ZetaLaw::constant(5.0));
  const VectorXd y = (VectorXd(2) << 1.0, 2.0).finished();
  const VectorXd u = (VectorXd(3) << 0.1, 0.2, 0.3).finished();
  const VectorXd out = h(y, u);
  ASSERT_EQ(out.size(), 2);
  EXPECT_DOUBLE_EQ(out(0), 2.1);
  EXPECT_DOUBLE_EQ(out(1), 4.3);
}

TEST(Sem, TopologicalEvaluation) {
  const auto f = std::make_shared<const Relationship>(sum_relationship());
  // 2 ← 0, 2 ← 1, 1 ← 0.
  SemModel sem({{"a", {}, 0, f}, {"b", {0}, 1, f}, {"c", {0, 1}, std::nullopt, f}}, {1, 1});
  const std::vector<double> n0 = {1.0}, n1 = {10.0};
  std::vector<double> values(3);
  sem.evaluate({n0, n1}, values);
  EXPECT_EQ(values, (std::vector<double>{1.0, 11.0, 12.0}));
  EXPECT_EQ(sem.edge_count(), 3u);
}

TEST(Sem, CycleRejected) {
  const auto f = std::make_shared<const Relationship>(sum_relationship());
  EXPECT_THROW(SemModel({{"a", {1}, std::nullopt, f}, {"b", {0}, std::nullopt, f}}, {}), SemCycleError);
}

TEST(Sem, InterventionReplacesAssignment) {
  const auto f = std::make_shared<const Relationship>(sum_relationship());
  SemModel sem({{"a", {}, 0, f}, {"b", {0}, 1, f}, {"c", {0, 1}, std::nullopt, f}}, {1, 1});
  SemAssignment assign;
  assign.target = 1;
  assign.inputs = {0};
  assign.zeta = [](std::span<const double> in) { return 3.0 * in[0]; };
  const auto post = intervene_sem(sem, {assign});
  const std::vector<double> n0 = {2.0}, n1 = {10.0};
  std::vector<double> values(3);
  post.evaluate({n0, n1}, values);
  EXPECT_EQ(values, (std::vector<double>{2.0, 6.0, 8.0}));
}
