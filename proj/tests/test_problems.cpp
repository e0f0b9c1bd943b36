#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"

using namespace qdc;
using testing_helpers::scalar;
using testing_helpers::shipped;

namespace {

FeasibleSet interval(double lo, double hi) { return FeasibleSet::box(Vec{lo}, Vec{hi}); }

const RatioPair kRatio{{"x0^2 + 1", Curvature::Convex}, {"x0 + 2", Curvature::Concave}};

}  // namespace

TEST(SingleRatio, KnownOptimum) {
  const BenchmarkInstance inst = make_single_ratio(kRatio, interval(0, 4));
  ASSERT_TRUE(inst.known_optimum);
  EXPECT_NEAR(inst.known_optimum->x[0], std::sqrt(5.0) - 2.0, 1e-7);
  EXPECT_NEAR(inst.known_optimum->value, 2.0 * std::sqrt(5.0) - 4.0, 1e-12);
  EXPECT_NEAR(theta_max(inst.problem, inst.known_optimum->x), inst.known_optimum->value, 1e-12);
  EXPECT_EQ(inst.oracle_grid, std::vector<std::size_t>{400'001});
}

TEST(SingleRatio, EqualNumeratorAndDenominator) {
  const BenchmarkInstance inst =
      make_single_ratio({{"x0 + 2", Curvature::Smooth}, {"x0 + 2", Curvature::Smooth}}, interval(0, 4));
  for (double x : {0.0, 1.3, 4.0}) EXPECT_DOUBLE_EQ(theta_max(inst.problem, Vec{x}), 1.0);
}

TEST(SingleRatio, ConstantNumerator) {
  const BenchmarkInstance inst =
      make_single_ratio({{"1", Curvature::Smooth}, {"x0 + 1", Curvature::Concave}}, interval(0, 1));
  const RunResult r = run_algorithm1(inst.problem, Vec{0.0}, SolverConfig{});
  EXPECT_NEAR(r.x_final[0], 1.0, 1e-9);
  EXPECT_NEAR(r.theta_final, 0.5, 1e-9);
}

TEST(SingleRatio, NonpositiveDenominatorRejected) {
  try {
    make_single_ratio({{"1", Curvature::Smooth}, {"x0 - 1", Curvature::Concave}}, interval(0, 4));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DenominatorSignViolation);
  }
}

TEST(MultiRatio, OnePairMatchesSingle) {
  const Problem single = make_single_ratio(kRatio, interval(0, 4)).problem;
  const Problem maxed = make_max_of_ratios({kRatio}, interval(0, 4)).problem;
  const Problem summed = make_sum_of_ratios({kRatio}, interval(0, 4)).problem;
  for (int s = 0; s <= 20; ++s) {
    const Vec x = {0.2 * s};
    EXPECT_DOUBLE_EQ(theta_max(maxed, x), theta_max(single, x));
    EXPECT_DOUBLE_EQ(theta_max(summed, x), theta_max(single, x));
  }
  const RunResult a = run_algorithm1(single, Vec{4.0}, SolverConfig{});
  const RunResult b = run_algorithm1(maxed, Vec{4.0}, SolverConfig{});
  EXPECT_EQ(a.x_final, b.x_final);
}

TEST(MultiRatio, IdenticalPairsUnderMax) {
  const Problem single = make_single_ratio(kRatio, interval(0, 4)).problem;
  const Problem twice = make_max_of_ratios({kRatio, kRatio}, interval(0, 4)).problem;
  for (double x : {0.0, 0.7, 3.3}) EXPECT_DOUBLE_EQ(theta_max(twice, Vec{x}), theta_max(single, Vec{x}));
}

TEST(MultiRatio, SumOfRatiosAgainstGrid) {
  // Frozen values from an independent 2001 x 2001 grid evaluation.
  const struct {
    const char* name;
    double value;
  } cases[] = {{"sor_a", 1.588201182858251}, {"sor_b", 0.3655807532031854}};
  for (const auto& c : cases) {
    const Problem p = shipped(c.name);
    const GridResult g = grid_oracle(p, {2001, 2001}, 4);
    EXPECT_NEAR(g.value_best, c.value, 1e-12) << c.name;
    const RunResult r = run_algorithm1(p, p.feasible_set().center(), SolverConfig{});
    EXPECT_NEAR(r.theta_final, g.value_best, 5e-3) << c.name;
    EXPECT_LE(r.theta_final, g.value_best + 1e-6) << c.name;
  }
}

TEST(Penalties, StandaloneValues) {
  EXPECT_DOUBLE_EQ(huber(0.3, 0.5), 0.045);
  EXPECT_DOUBLE_EQ(huber(-2.0, 0.5), 0.125 + 0.5 * 1.5);
  EXPECT_DOUBLE_EQ(scad(0.5, 3.7, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(scad(-7.0, 3.7, 0.5), 1.0);
  EXPECT_DOUBLE_EQ(scad(0.0, 3.7, 0.5), 0.0);
  EXPECT_NEAR(scad(0.1, 3.0, 1.0), 0.15, 1e-15);
}

TEST(Penalties, CompositesMatchStandaloneFormulas) {
  const FeasibleSet X = FeasibleSet::box(Vec{-2, -2}, Vec{2, 2});
  const std::vector<std::string> gs = {"x0^2 + x1^2 - 1", "x0 + x1 - 2.5"};
  const BenchmarkInstance sc = make_scad_constraint_count(gs, 3.7, 0.5, X);
  const std::vector<RatioPair> pairs = {{{"x0^2 + x1^2 + 1", Curvature::Convex}, {"x0 + x1 + 5", Curvature::Concave}}};
  const BenchmarkInstance hu = make_huber_deviation(pairs, 0.5, 0.4, X);
  std::mt19937_64 rng(21);
  for (int s = 0; s < 1000; ++s) {
    const Vec x = X.sample(rng);
    const double g0 = x[0] * x[0] + x[1] * x[1] - 1, g1 = x[0] + x[1] - 2.5;
    const double want_scad = scad(std::max(g0, 0.0), 3.7, 0.5) + scad(std::max(g1, 0.0), 3.7, 0.5);
    EXPECT_NEAR(theta_max(sc.problem, x), want_scad, 1e-12);
    const double q = (x[0] * x[0] + x[1] * x[1] + 1) / (x[0] + x[1] + 5);
    EXPECT_NEAR(theta_max(hu.problem, x), huber(q - 0.4, 0.5), 1e-12);
  }
}

TEST(Penalties, ShippedInstancesMatchTheFactories) {
  const Problem shipped_scad = shipped("scad_count");
  const BenchmarkInstance built =
      make_scad_constraint_count({"x0^2 + x1^2 - 1", "x0 + x1 - 2.5"}, 3.7, 0.5, shipped_scad.feasible_set());
  std::mt19937_64 rng(4);
  for (int s = 0; s < 100; ++s) {
    const Vec x = shipped_scad.feasible_set().sample(rng);
    EXPECT_NEAR(theta_max(shipped_scad, x), theta_max(built.problem, x), 1e-12);
  }
}

TEST(Penalties, InvalidParameters) {
  const FeasibleSet X = interval(-1, 1);
  auto code = [](auto&& f) {
    try {
      f();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::ConfigError;
  };
  EXPECT_EQ(code([&] { make_scad_constraint_count({"x0"}, 2.0, 0.5, X); }), ErrorCode::InvalidParameter);
  EXPECT_EQ(code([&] { make_scad_constraint_count({"x0"}, 3.7, 0.0, X); }), ErrorCode::InvalidParameter);
  EXPECT_EQ(code([&] { make_scad_constraint_count({}, 3.7, 0.5, X); }), ErrorCode::InvalidParameter);
  EXPECT_EQ(code([&] { make_huber_deviation({kRatio}, -0.1, 0.0, X); }), ErrorCode::InvalidParameter);
  EXPECT_EQ(code([&] { make_huber_deviation({}, 0.5, 0.0, X); }), ErrorCode::InvalidParameter);
}

TEST(GridOracle, Square) {
  const GridResult g = grid_oracle(scalar(R"({"diffmax":["x0^2"]})", -1, 1), {2001});
  EXPECT_EQ(g.x_best, Vec{0.0});
  EXPECT_EQ(g.value_best, 0.0);
  EXPECT_EQ(g.points, 2001u);
}

TEST(GridOracle, Abs) {
  const GridResult g = grid_oracle(scalar(R"({"cvx":["x0","-x0"]})", -1, 1), {2001});
  EXPECT_EQ(g.x_best, Vec{0.0});
  EXPECT_EQ(g.value_best, 0.0);
}

TEST(GridOracle, SingleRatioFineGrid) {
  const BenchmarkInstance inst = make_single_ratio(kRatio, interval(0, 4));
  const GridResult g = grid_oracle(inst.problem, inst.oracle_grid, 4);
  EXPECT_NEAR(g.value_best, 0.472136, 1e-5);
  EXPECT_NEAR(g.value_best, 0.4721359550014087, 1e-13);
  EXPECT_NEAR(g.x_best[0], std::sqrt(5.0) - 2.0, 1e-5);
}

TEST(GridOracle, WorkersAgree) {
  const Problem p = shipped("sor_c");
  const GridResult a = grid_oracle(p, {301, 301}, 1);
  const GridResult b = grid_oracle(p, {301, 301}, 3);
  EXPECT_EQ(a.x_best, b.x_best);
  EXPECT_EQ(a.value_best, b.value_best);
}

TEST(GridOracle, SkipsPointsOutsideTheBall) {
  const Problem p = shipped("polyhedral");
  const GridResult g = grid_oracle(p, {101, 101});
  EXPECT_LT(g.points, 101u * 101u);
  EXPECT_TRUE(p.feasible_set().contains(g.x_best));
}

TEST(GridOracle, TooLarge) {
  const Problem four = testing_helpers::problem(R"({"dimension":4,"feasible_set":{"type":"box","lower":[0,0,0,0],"upper":[1,1,1,1]},
    "composites":[{"outer":{"type":"I","phi":"y0"},"inner":[{"diffmax":["x0"]}]}]})");
  try {
    grid_oracle(four, {3, 3, 3, 3});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::GridTooLarge);
  }
  try {
    grid_oracle(shipped("sor_a"), {5000, 5000});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::GridTooLarge);
  }
}

TEST(GridOracle, ReproducesShippedKnownOptima) {
  for (const char* name : {"ratio1", "max_ratios", "quad_ref", "min_abs"}) {
    const LoadedProblem lp = load_problem(std::string(QDC_DATA_DIR) + "/" + name + ".json");
    ASSERT_TRUE(lp.known_optimum) << name;
    const std::size_t n = lp.problem.dimension();
    const GridResult g = grid_oracle(lp.problem, std::vector<std::size_t>(n, n == 1 ? 400'001 : 2001), 4);
    EXPECT_NEAR(g.value_best, lp.known_optimum->value, 1e-5) << name;
  }
}

TEST(DirectDescent, StationaryPointStays) {
  const Problem p = shipped("dk_cvx_cve");
  const Vec xs = {std::sqrt(5.0) - 2.0};
  const DirectDescentStep st = direct_descent_step(p, xs, QuotientVariant::CvxOverCve, 1.0, DenominatorBounds{2, 6});
  EXPECT_NEAR(st.xhat[0], xs[0], 1e-7);
  EXPECT_TRUE(st.certificate.holds);
}

TEST(DirectDescent, StrictDescentFromTheRightEnd) {
  const Problem p = shipped("dk_cvx_cve");
  const DirectDescentStep st = direct_descent_step(p, Vec{4.0}, QuotientVariant::CvxOverCve, 1.0, DenominatorBounds{2, 6});
  EXPECT_DOUBLE_EQ(st.certificate.constant, 1.0 / 6.0);
  EXPECT_TRUE(st.certificate.holds);
  EXPECT_LT(st.certificate.theta_after, st.certificate.theta_before);
  EXPECT_LT(st.xhat[0], 4.0);
}

TEST(DirectDescent, TenStepsReachASmallResidual) {
  const Problem p = shipped("dk_cvx_cve");
  SolverConfig cfg;
  cfg.rho = 0.1;  // with rho = 1 the prox term slows this to 4e-2 after ten steps
  cfg.max_outer = 10;
  cfg.tol_step = 1e-300;
  const RunResult r = run_direct_descent(p, Vec{4.0}, QuotientVariant::CvxOverCve, cfg, DenominatorBounds{2, 6});
  ASSERT_EQ(r.trace.records.size(), 11u);
  EXPECT_LT(r.trace.records.back().dx_half_norm, 1e-3);
  EXPECT_LT(stationarity_residual(p, r.x_final, 1.0, StationarityMode::Weak), 1e-3);
  EXPECT_TRUE(audit_descent(r.trace, cfg.sigma, cfg.rho).pass());
}

TEST(DirectDescent, AllVariantsOnShippedInstances) {
  const struct {
    const char* name;
    QuotientVariant variant;
    double x0;
  } cases[] = {{"dk_cvx_cve", QuotientVariant::CvxOverCve, 4.0},
               {"dk_cvx_diffcvx", QuotientVariant::CvxOverDiffCvx, 2.0},
               {"dk_diffcve_cve", QuotientVariant::DiffCveOverCve, 0.0}};
  for (const auto& c : cases) {
    const Problem p = shipped(c.name);
    SolverConfig cfg;
    cfg.max_outer = 200;
    const RunResult r = run_direct_descent(p, Vec{c.x0}, c.variant, cfg);
    EXPECT_TRUE(converged(r.status)) << c.name;
    EXPECT_GT(r.trace.records.size(), 1u) << c.name;
    EXPECT_LE(stationarity_residual(p, r.x_final, cfg.rho, StationarityMode::Weak), 1e-4) << c.name;
  }
}

TEST(DirectDescent, DinkelbachRunMatchesTheKnownOptimum) {
  const BenchmarkInstance inst = make_single_ratio(kRatio, interval(0, 4));
  SolverConfig cfg;
  cfg.max_outer = 2000;
  const RunResult r = run_direct_descent(inst.problem, Vec{4.0}, QuotientVariant::CvxOverCve, cfg);
  EXPECT_NEAR(r.theta_final, inst.known_optimum->value, 1e-6);
}

TEST(DirectDescent, CurvatureMismatch) {
  auto code = [](const Problem& p, QuotientVariant v) {
    try {
      direct_descent_step(p, p.feasible_set().center(), v, 1.0);
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::ConfigError;
  };
  // Wrong variant for the layout, and a problem that is not a quotient at all.
  EXPECT_EQ(code(shipped("dk_cvx_cve"), QuotientVariant::DiffCveOverCve), ErrorCode::CurvatureMismatch);
  EXPECT_EQ(code(shipped("quad_ref"), QuotientVariant::CvxOverCve), ErrorCode::CurvatureMismatch);
  // Layout right but the "convex" numerator is concave.
  const Problem bad = testing_helpers::problem(R"({"dimension":1,"feasible_set":{"type":"box","lower":[0],"upper":[1]},
    "composites":[{"outer":{"type":"I","phi":"y0/y1"},"inner":[{"cvx":["2 - x0^2"]},{"cve":["x0 + 2"]}]}]})");
  EXPECT_EQ(code(bad, QuotientVariant::CvxOverCve), ErrorCode::CurvatureMismatch);
}

TEST(DirectDescent, DenominatorBounds) {
  const DenominatorBounds b = estimate_denominator_bounds(shipped("dk_cvx_cve"));
  EXPECT_GT(b.low, 0.0);
  EXPECT_LE(b.low, 2.0);
  EXPECT_GE(b.high, 6.0);
}

TEST(RandomInstances, DeterministicAndTouchingAtXbar) {
  for (OuterKind k : kAllOuterKinds) {
    std::mt19937_64 a(8), b(8);
    const RandomInstance ia = random_instance(k, a), ib = random_instance(k, b);
    EXPECT_EQ(ia.xbar, ib.xbar) << to_string(k);
    EXPECT_EQ(problem_to_json(ia.problem), problem_to_json(ib.problem)) << to_string(k);
    EXPECT_EQ(ia.problem.dimension(), 2u);
    EXPECT_TRUE(ia.problem.feasible_set().contains(ia.xbar));
  }
}
