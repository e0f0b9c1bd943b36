#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"

using namespace qdc;
using testing_helpers::scalar;
using testing_helpers::shipped;

TEST(DescentAudit, Algorithm1TracesPass) {
  for (const char* name : {"ratio1", "sor_c", "polyhedral", "concave_outer"}) {
    const Problem p = shipped(name);
    SolverConfig cfg;
    const RunResult r = run_algorithm1(p, p.feasible_set().center(), cfg);
    const DescentAudit a = audit_descent(r.trace, cfg.sigma, cfg.rho);
    EXPECT_EQ(a.kind, "armijo");
    EXPECT_TRUE(a.pass()) << name << " worst slack " << a.worst_slack;
    EXPECT_GE(a.worst_slack, -1e-9) << name;
  }
}

TEST(DescentAudit, TamperedTraceFlagged) {
  SolverConfig cfg;
  RunResult r = run_algorithm1(shipped("sor_a"), Vec{0.2, 1.8}, cfg);
  ASSERT_GE(r.trace.records.size(), 3u);
  r.trace.records[2].theta_max += 1.0;
  const DescentAudit a = audit_descent(r.trace, cfg.sigma, cfg.rho);
  EXPECT_FALSE(a.pass());
  EXPECT_GE(a.violations, 1u);
  EXPECT_EQ(a.worst_iter, 1);
  EXPECT_FALSE(a.monotone);
  EXPECT_EQ(a.first_increase, 1);
}

TEST(DescentAudit, UnitStepCoefficient) {
  const LipschitzData lip{std::sqrt(2.18), 1.0, 1.0};
  SolverConfig cfg;
  cfg.rho = 2.5 * unit_step_constant(lip);
  cfg.max_outer = 5000;
  const RunResult r = run_unit_step(shipped("quad_ref"), Vec{0.9, 0.9}, cfg, lip);
  const DescentAudit a = audit_descent(r.trace, cfg.sigma, cfg.rho);
  EXPECT_EQ(a.kind, "unit_step");
  EXPECT_NEAR(a.coefficient, 0.5 * cfg.rho - (1.0 + std::sqrt(2.18)), 1e-7);
  EXPECT_TRUE(a.pass());
}

TEST(RateFit, LinearOnTheQuadratic) {
  SolverConfig cfg;
  cfg.tol_step = 1e-12;
  const RunResult r = run_algorithm1(shipped("quad_ref"), Vec{0.9, 0.9}, cfg);
  const RateFit f = fit_rate(r.trace);
  EXPECT_EQ(f.regime, Regime::Linear);
  EXPECT_LT(f.q, 1.0);
  EXPECT_GT(f.q, 0.0);
  EXPECT_TRUE(f.confident);
  EXPECT_GE(f.tail_points, 5u);
}

TEST(RateFit, SyntheticTails) {
  auto trace_from = [](auto err) {
    IterateTrace t;
    t.algorithm = "alg1";
    for (int k = 0; k < 80; ++k) {
      IterRecord r;
      r.iter = k;
      r.x = {1.0 + err(k)};
      r.dx_half_norm = std::abs(err(k + 1) - err(k));
      t.records.push_back(r);
    }
    t.records.back().x = {1.0};
    return t;
  };
  const RateFit geo = fit_rate(trace_from([](int k) { return std::pow(0.7, k); }));
  EXPECT_EQ(geo.regime, Regime::Linear);
  EXPECT_NEAR(geo.q, 0.7, 1e-3);
  // A power-law tail keeps every trailing-half error within a constant factor
  // of the truncation error, so the cutoff leaves nothing to fit.
  try {
    fit_rate(trace_from([](int k) { return 1.0 / std::pow(k + 1.0, 1.5); }));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientData);
  }
}

TEST(RateFit, FiniteTermination) {
  IterateTrace t;
  t.algorithm = "alg1";
  for (int k = 0; k < 30; ++k) {
    IterRecord r;
    r.iter = k;
    r.x = {k < 10 ? 1.0 - 0.1 * k : 0.0};
    r.dx_half_norm = k < 9 ? 0.1 : 0.0;
    t.records.push_back(r);
  }
  EXPECT_EQ(fit_rate(t).regime, Regime::Finite);
}

TEST(RateFit, ShortTraceRejected) {
  IterateTrace t;
  for (int k = 0; k < 5; ++k) {
    IterRecord r;
    r.iter = k;
    r.x = {1.0 / (k + 1)};
    t.records.push_back(r);
  }
  try {
    fit_rate(t);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InsufficientData);
  }
}

TEST(FiniteDifferences, QuadraticErrorIsFirstOrder) {
  const Problem p = shipped("quad_ref");
  const std::vector<Vec> pts = {{0.1, 0.2}}, dirs = {{1.0, 0.0}};
  const double e1 = fd_directional_check(p, pts, dirs, 1e-3).max_error;
  const double e2 = fd_directional_check(p, pts, dirs, 1e-4).max_error;
  EXPECT_NEAR(e1, 0.5e-3, 1e-9);  // h/2 times the curvature along x0
  EXPECT_NEAR(e2 / e1, 0.1, 1e-6);
}

TEST(FiniteDifferences, AbsAtZeroIsExact) {
  const Problem p = scalar(R"({"cvx":["x0","-x0"]})", -1, 1);
  const FdReport r = fd_directional_check(p, {{0.0}}, {{1.0}, {-1.0}});
  EXPECT_EQ(r.checks, 2u);
  EXPECT_EQ(r.max_error, 0.0);
  EXPECT_TRUE(r.pass);
}

TEST(FiniteDifferences, RatioAtRandomPoints) {
  const Problem p = shipped("ratio1");
  std::mt19937_64 rng(17);
  const FdReport r = fd_directional_check(p, interior_points(p.feasible_set(), 50, rng), {{1.0}, {-1.0}});
  EXPECT_EQ(r.checks, 100u);
  EXPECT_TRUE(r.pass) << r.max_error;
}

TEST(FiniteDifferences, CoarseStepFails) {
  // Forward difference of x^2 with h = 0.1 is off by h.
  const Problem p = scalar(R"({"cvx":["x0^2"]})", -1, 1);
  EXPECT_FALSE(fd_directional_check(p, {{0.5}}, {{1.0}}, 0.1).pass);
}

TEST(Sampling, InteriorPointsAndDirections) {
  const Problem p = shipped("polyhedral");
  std::mt19937_64 rng(1);
  for (const Vec& x : interior_points(p.feasible_set(), 200, rng)) EXPECT_TRUE(p.feasible_set().contains(x));
  for (const Vec& v : unit_directions(3, 50, rng)) EXPECT_NEAR(norm(v), 1.0, 1e-12);
}

TEST(SurrogateSweep, ShippedProblemsPass) {
  for (const char* name : {"abs_split", "polyhedral", "concave_outer", "scad_count"}) {
    const Problem p = shipped(name);
    std::mt19937_64 rng(6);
    const SurrogateSweep s = sweep_surrogates(p, interior_points(p.feasible_set(), 20, rng), rng, 0.1);
    EXPECT_TRUE(s.pass()) << name;
    EXPECT_GT(s.models, 0u) << name;
  }
}
