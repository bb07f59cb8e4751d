#include <gtest/gtest.h>

#include <cmath>
#include <string>
#include <vector>

#include "causal_sde/expression.hpp"
#include "support.hpp"

using namespace causal_sde;
using testing_support::Gen;

namespace {

double eval(const std::string& src, std::vector<double> x) {
  return parse_expression(src, {})(x);
}

std::size_t error_offset(const std::string& src, const ParseOptions& opts = {}) {
  try {
    parse_expression(src, opts);
  } catch (const ParseError& e) {
    return e.offset();
  }
  ADD_FAILURE() << "no error for '" << src << "'";
  return 0;
}

std::string random_expression(Gen& g, int depth) {
  static const char* const ops[] = {"+", "-", "*", "/", "^"};
  static const char* const unary[] = {"sqrt", "exp", "log", "abs", "sin", "cos"};
  static const char* const binary[] = {"pow", "min", "max"};
  if (depth == 0 || g.uniform(0, 1) < 0.2) {
    if (g.coin()) return "x" + std::to_string(1 + g.index(3));
    return std::to_string(static_cast<int>(g.index(20))) + (g.coin() ? ".25" : "");
  }
  switch (g.index(5)) {
    case 0:
      return "(" + random_expression(g, depth - 1) + ")";
    case 1:
      return "-" + random_expression(g, depth - 1);
    case 2:
      return std::string(unary[g.index(6)]) + "(" + random_expression(g, depth - 1) + ")";
    case 3:
      return std::string(binary[g.index(3)]) + "(" + random_expression(g, depth - 1) + ", " +
             random_expression(g, depth - 1) + ")";
    default:
      return random_expression(g, depth - 1) + " " + ops[g.index(5)] + " " + random_expression(g, depth - 1);
  }
}

bool same_value(double a, double b) {
  if (std::isnan(a) && std::isnan(b)) return true;
  return a == b;
}

}  // namespace

TEST(Expression, Examples) {
  EXPECT_EQ(eval("x1 + 2*x2", {1, 3}), 7.0);
  EXPECT_EQ(eval("sqrt(x1^2 + x2^2)", {3, 4}), 5.0);
}

TEST(Expression, Precedence) {
  EXPECT_EQ(eval("2^3^2", {}), 512.0);
  EXPECT_EQ(eval("-2^2", {}), -4.0);
  EXPECT_EQ(eval("1 - 2 - 3", {}), -4.0);
  EXPECT_EQ(eval("8 / 4 / 2", {}), 1.0);
  EXPECT_EQ(eval("1 + 2 * 3", {}), 7.0);
  EXPECT_EQ(eval("(1 + 2) * 3", {}), 9.0);
  EXPECT_EQ(eval("2 * -3", {}), -6.0);
  EXPECT_EQ(eval("--2", {}), 2.0);
}

TEST(Expression, Functions) {
  EXPECT_EQ(eval("min(x1, 2)", {3}), 2.0);
  EXPECT_EQ(eval("max(x1, 2)", {3}), 3.0);
  EXPECT_EQ(eval("pow(2, 10)", {}), 1024.0);
  EXPECT_EQ(eval("abs(-1.5)", {}), 1.5);
  EXPECT_DOUBLE_EQ(eval("exp(log(x1))", {2.5}), 2.5);
  EXPECT_DOUBLE_EQ(eval("sin(x1)^2 + cos(x1)^2", {0.7}), 1.0);
  EXPECT_EQ(eval("1.5e2", {}), 150.0);
}

TEST(Expression, NonFiniteResults) {
  EXPECT_TRUE(std::isinf(eval("1 / x1", {0.0})));
  EXPECT_TRUE(std::isnan(eval("sqrt(x1)", {-1.0})));
  EXPECT_TRUE(std::isnan(eval("log(x1)", {-1.0})));
}

TEST(Expression, Constants) {
  ParseOptions opts;
  opts.constants["k"] = 0.5;
  const auto e = parse_expression("k * x1", opts);
  EXPECT_EQ(e(std::vector<double>{4.0}), 2.0);
  EXPECT_TRUE(e.variables() == std::set<std::size_t>{0});
}

TEST(Expression, SyntaxErrorOffsets) {
  EXPECT_EQ(error_offset("x1 +"), 4u);
  EXPECT_EQ(error_offset("(x1"), 3u);
  EXPECT_EQ(error_offset("x1 $ 2"), 3u);
  EXPECT_EQ(error_offset("2 3"), 2u);
}

TEST(Expression, ErrorsCarryExpectedTokens) {
  try {
    parse_expression("x1 +", {});
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_FALSE(e.expected().empty());
    EXPECT_NE(std::string(e.what()).find("offset 4"), std::string::npos);
  }
}

TEST(Expression, UnknownIdentifierAndArity) {
  ParseOptions two;
  two.dimension = 2;
  EXPECT_EQ(error_offset("x1 + x3", two), 5u);
  EXPECT_THROW(parse_expression("y + 1", {}), ParseError);
  EXPECT_THROW(parse_expression("x0", {}), ParseError);
  EXPECT_THROW(parse_expression("sqrt(1, 2)", {}), ParseError);
  EXPECT_THROW(parse_expression("pow(1)", {}), ParseError);
  EXPECT_THROW(parse_expression("foo(1)", {}), ParseError);
}

TEST(Expression, Variables) {
  const auto e = parse_expression("x3 * sin(x1) + 2", {});
  EXPECT_TRUE(e.variables() == (std::set<std::size_t>{0, 2}));
  EXPECT_TRUE(parse_expression("2 * 3", {}).is_constant());
}

TEST(ExpressionProperty, PrintParseRoundTrip) {
  Gen g(2024);
  for (int trial = 0; trial < 500; ++trial) {
    const std::string src = random_expression(g, 4);
    const auto first = parse_expression(src, {});
    const auto second = parse_expression(first.to_string(), {});
    ASSERT_TRUE(first == second) << src << " -> " << first.to_string();
    const std::vector<double> x = {g.uniform(-2, 2), g.uniform(-2, 2), g.uniform(-2, 2)};
    ASSERT_TRUE(same_value(first(x), second(x))) << src;
  }
}

TEST(ExpressionProperty, EvaluationIsPure) {
  Gen g(7);
  for (int trial = 0; trial < 100; ++trial) {
    const auto e = parse_expression(random_expression(g, 4), {});
    const std::vector<double> x = {g.uniform(-2, 2), g.uniform(-2, 2), g.uniform(-2, 2)};
    ASSERT_TRUE(same_value(e(x), e(x)));
  }
}
