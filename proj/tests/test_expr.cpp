#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "qdc/expr.hpp"

using qdc::Expr;

namespace {

double fd(const Expr& e, std::vector<double> x, std::size_t i, double h = 1e-6) {
  auto up = x, dn = x;
  up[i] += h;
  dn[i] -= h;
  return (e.value(up) - e.value(dn)) / (2 * h);
}

}  // namespace

TEST(Expr, ArithmeticAndPrecedence) {
  const std::vector<double> x = {3.0, 2.0};
  EXPECT_DOUBLE_EQ(Expr::parse("x0 + x1 * 2").value(x), 7.0);
  EXPECT_DOUBLE_EQ(Expr::parse("(x0 + x1) * 2").value(x), 10.0);
  EXPECT_DOUBLE_EQ(Expr::parse("-x0^2").value(x), -9.0);
  EXPECT_DOUBLE_EQ(Expr::parse("2^3^2").value(x), 512.0);
  EXPECT_DOUBLE_EQ(Expr::parse("x0 / x1 / 3").value(x), 0.5);
  EXPECT_DOUBLE_EQ(Expr::parse("x - x1").value(x), 1.0);
  EXPECT_NEAR(Expr::parse("sin(pi/2) + cos(0) + exp(0) + log(1) + sqrt(4) + tanh(0)").value(x), 5.0, 1e-15);
}

TEST(Expr, QuotientExample) {
  const Expr e = Expr::parse("(x0^2 + 1) / (x0 + 2)");
  const std::vector<double> x = {1.0};
  EXPECT_DOUBLE_EQ(e.value(x), 2.0 / 3.0);
  std::vector<double> g(1);
  e.gradient(std::vector<double>{0.0}, g);
  EXPECT_DOUBLE_EQ(g[0], -0.25);
}

TEST(Expr, GradientMatchesCentralDifferences) {
  const Expr e = Expr::parse("x0^2*x1 + exp(0.3*x1) / (2 + sin(x0)) - sqrt(x0^2 + 1) + x1^x0 + tanh(x0*x1)");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.2, 1.5);
  for (int s = 0; s < 50; ++s) {
    const std::vector<double> x = {u(rng), u(rng)};
    std::vector<double> g(2);
    const double v = e.gradient(x, g);
    EXPECT_DOUBLE_EQ(v, e.value(x));
    for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(g[i], fd(e, x, i), 1e-5 * std::max(1.0, std::abs(g[i])));
  }
}

TEST(Expr, ArityAndConstants) {
  EXPECT_EQ(Expr::parse("y2 + y0").arity(), 3u);
  EXPECT_TRUE(Expr::parse("1 + 2*3").is_constant());
  EXPECT_DOUBLE_EQ(Expr::parse("1 + 2*3").value({}), 7.0);
  EXPECT_DOUBLE_EQ(Expr::constant(-2.5).value({}), -2.5);
  EXPECT_TRUE(Expr::parse("1/x0").has_division());
  EXPECT_FALSE(Expr::parse("x0*x0").has_division());
}

TEST(Expr, DenominatorsReported) {
  const auto d = Expr::parse("x0/(x0 - 3) + 1/x1").denominators(std::vector<double>{1.0, 2.0});
  ASSERT_EQ(d.size(), 2u);
  EXPECT_DOUBLE_EQ(std::min(d[0], d[1]), -2.0);
  EXPECT_DOUBLE_EQ(std::max(d[0], d[1]), 2.0);
}

TEST(Expr, HuberAndScadNodes) {
  const std::vector<double> t = {0.3};
  EXPECT_DOUBLE_EQ(Expr::parse("huber(x0, 0.5)").value(t), 0.045);
  EXPECT_DOUBLE_EQ(Expr::parse("huber(x0, 0.1)").value(t), 0.005 + 0.1 * 0.2);
  EXPECT_DOUBLE_EQ(Expr::parse("scad(x0, 3.7, 0.2)").value(t), 1.0);
  EXPECT_DOUBLE_EQ(Expr::parse("scad(x0 - 0.3, 3.7, 0.2)").value(t), 0.0);
  // C^1 across the knee of the scad node.
  const Expr s = Expr::parse("scad(x0, 3, 1)");
  for (double at : {1.0 / 3.0, 1.0}) EXPECT_NEAR(fd(s, {at}, 0, 1e-7), fd(s, {at + 1e-5}, 0, 1e-7), 1e-3);
}

TEST(Expr, ParseErrors) {
  for (const char* bad : {"", "x0 +", "(x0", "foo(x0)", "x0 x1", "huber(x0, x1)", "huber(x0, -1)", "scad(x0, 1.5, 1)",
                          "z3", "x0 $ 1"}) {
    try {
      Expr::parse(bad);
      ADD_FAILURE() << "accepted: " << bad;
    } catch (const qdc::Error& e) {
      EXPECT_EQ(e.code(), qdc::ErrorCode::ParseError) << bad;
    }
  }
}

TEST(Expr, SourceKept) { EXPECT_EQ(Expr::parse("x0 + 1").source(), "x0 + 1"); }
