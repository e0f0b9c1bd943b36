#include <gtest/gtest.h>

#include <cmath>

#include "helpers.hpp"

using namespace qdc;
using testing_helpers::scalar;
using testing_helpers::shipped;

namespace {

Problem square() { return scalar(R"({"diffmax":["x0^2"]})", -1, 1); }
Problem abs1() { return scalar(R"({"cvx":["x0","-x0"]})", -1, 1); }

}  // namespace

TEST(Armijo, QuadraticUnitStep) {
  const Problem p = square();
  const ArmijoResult r = armijo_search(p, Vec{1.0}, Vec{-1.0}, 0.5, 0.5, 1.0, 60);
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(r.m, 0);
  EXPECT_EQ(r.tau, 1.0);
  EXPECT_DOUBLE_EQ(r.theta_new, 0.0);
}

TEST(Armijo, DirectionPassingAtZeroKeepsTauOne) {
  const Problem p = shipped("quad_ref");
  const Vec x = {0.9, 0.9};
  const Vec d = sub(Vec{0.3, -0.4}, x);  // straight to the minimizer
  // Full decrease 0.39125 against sigma rho / 2 |d|^2 = 0.25625.
  const ArmijoResult r = armijo_search(p, x, d, 0.5, 0.5, 0.5, 60);
  EXPECT_TRUE(r.ok);
  EXPECT_EQ(r.tau, 1.0);
}

TEST(Armijo, QuarticWithLargeRhoNeverPasses) {
  // The decrease 1 - (1 - 2 tau)^4 stays below 8 tau while the test demands 18 tau.
  const Problem p = scalar(R"({"diffmax":["x0^4"]})", -2, 2);
  const ArmijoResult r = armijo_search(p, Vec{1.0}, Vec{-2.0}, 0.9, 0.5, 10.0, 60);
  EXPECT_FALSE(r.ok);
  EXPECT_EQ(r.m, 60);
  EXPECT_DOUBLE_EQ(r.theta_new, 1.0);
}

TEST(Algorithm1, SquareFromOne) {
  SolverConfig cfg;
  const RunResult r = run_algorithm1(square(), Vec{1.0}, cfg);
  EXPECT_TRUE(converged(r.status));
  EXPECT_LE(std::abs(r.x_final[0]), 1e-4);
}

TEST(Algorithm1, SingleRatioFromFour) {
  const LoadedProblem lp = load_problem(std::string(QDC_DATA_DIR) + "/ratio1.json");
  SolverConfig cfg;
  const RunResult r = run_algorithm1(lp.problem, Vec{4.0}, cfg);
  EXPECT_EQ(r.status, Status::WeakDStationary);
  EXPECT_NEAR(r.x_final[0], std::sqrt(5.0) - 2.0, 1e-3);
  EXPECT_NEAR(r.theta_final, 2.0 * std::sqrt(5.0) - 4.0, 1e-6);
  ASSERT_TRUE(lp.known_optimum);
  EXPECT_NEAR(r.theta_final, lp.known_optimum->value, 1e-6);
}

TEST(Algorithm1, StationaryStartStopsImmediately) {
  SolverConfig cfg;
  const RunResult r = run_algorithm1(abs1(), Vec{0.0}, cfg);
  EXPECT_EQ(r.status, Status::WeakDStationary);
  ASSERT_EQ(r.trace.records.size(), 1u);
  EXPECT_EQ(r.trace.records[0].iter, 0);
  EXPECT_EQ(r.x_final, Vec{0.0});
}

TEST(Algorithm1, TraceIsMonotoneAndComplete) {
  SolverConfig cfg;
  const RunResult r = run_algorithm1(shipped("sor_c"), Vec{1.0, 1.0}, cfg);
  ASSERT_TRUE(converged(r.status));
  const auto& rec = r.trace.records;
  for (std::size_t k = 1; k < rec.size(); ++k) {
    EXPECT_EQ(rec[k].iter, static_cast<int>(k));
    EXPECT_LE(rec[k].theta_max, rec[k - 1].theta_max);
    EXPECT_EQ(rec[k].x.size(), 2u);
    EXPECT_FALSE(rec[k].mtheta.empty());
  }
  EXPECT_EQ(rec.back().x, r.x_final);
}

TEST(Algorithm1, RandomRuleIsSeeded) {
  SolverConfig cfg;
  const Problem p = shipped("polyhedral");
  const RunResult a = run_algorithm1(p, Vec{0.5, -0.5}, cfg, TupleRule::random(5));
  const RunResult b = run_algorithm1(p, Vec{0.5, -0.5}, cfg, TupleRule::random(5));
  EXPECT_EQ(a.x_final, b.x_final);
  EXPECT_EQ(a.trace.records.size(), b.trace.records.size());
}

TEST(Algorithm1, InfeasibleStartRejected) {
  try {
    run_algorithm1(square(), Vec{3.0}, SolverConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::InvalidParameter);
  }
  EXPECT_THROW(run_algorithm1(square(), Vec{0.0, 0.0}, SolverConfig{}), Error);
}

TEST(Algorithm1, MaxOuterReached) {
  SolverConfig cfg;
  cfg.max_outer = 2;
  cfg.tol_step = 1e-300;
  const RunResult r = run_algorithm1(shipped("sor_a"), Vec{0.1, 0.1}, cfg);
  EXPECT_EQ(r.status, Status::MaxOuterReached);
  EXPECT_FALSE(converged(r.status));
}

TEST(Algorithm2, MatchesAlgorithm1OnSmoothProblems) {
  for (const char* name : {"sor_a", "sor_b", "quad_ref"}) {
    const Problem p = shipped(name);
    SolverConfig cfg;
    const RunResult a = run_algorithm1(p, Vec{0.8, 0.6}, cfg);
    const RunResult b = run_algorithm2(p, Vec{0.8, 0.6}, cfg);
    ASSERT_EQ(a.trace.records.size(), b.trace.records.size()) << name;
    for (std::size_t k = 0; k < a.trace.records.size(); ++k) {
      EXPECT_EQ(a.trace.records[k].x, b.trace.records[k].x) << name;
      EXPECT_EQ(a.trace.records[k].theta_max, b.trace.records[k].theta_max) << name;
    }
  }
}

TEST(Algorithm2, EscapesAWeakStationaryPoint) {
  // dc_kink at 0 is weakly but not strongly stationary; the full family finds descent.
  const Problem p = shipped("dc_kink");
  SolverConfig cfg;
  const RunResult weak = run_algorithm1(p, Vec{0.0}, cfg);
  EXPECT_EQ(weak.status, Status::WeakDStationary);
  EXPECT_EQ(weak.trace.records.size(), 1u);
  const RunResult strong = run_algorithm2(p, Vec{0.0}, cfg);
  EXPECT_EQ(strong.status, Status::DStationary);
  EXPECT_NEAR(strong.x_final[0], 0.5, 1e-4);
  EXPECT_NEAR(strong.theta_final, -0.25, 1e-8);
}

TEST(Algorithm2, MinAbsFromZero) {
  const RunResult r = run_algorithm2(shipped("min_abs"), Vec{0.0}, SolverConfig{});
  EXPECT_EQ(r.status, Status::DStationary);
  EXPECT_LE(r.theta_final, 1e-4);
}

TEST(Algorithm2, FamilyCapEnforced) {
  SolverConfig cfg;
  cfg.family_cap = 1;
  try {
    run_algorithm2(shipped("min_abs"), Vec{0.0}, cfg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::FamilyTooLarge);
  }
}

TEST(Algorithm2, WorkerCountDoesNotChangeTheResult) {
  const Problem p = shipped("polyhedral");
  SolverConfig one, four;
  four.workers = 4;
  const RunResult a = run_algorithm2(p, Vec{0.6, 0.6}, one);
  const RunResult b = run_algorithm2(p, Vec{0.6, 0.6}, four);
  EXPECT_EQ(a.x_final, b.x_final);
  EXPECT_EQ(a.trace.records.size(), b.trace.records.size());
}

TEST(UnitStep, QuadraticWithExactConstants) {
  const Problem p = shipped("quad_ref");
  LipschitzData lip{std::sqrt(2.18), 1.0, 1.0};
  const double C = unit_step_constant(lip);
  EXPECT_DOUBLE_EQ(C, 1.0 + std::sqrt(2.18));
  SolverConfig cfg;
  cfg.rho = 2.5 * C;
  cfg.max_outer = 5000;
  const RunResult r = run_unit_step(p, Vec{0.9, 0.9}, cfg, lip);
  EXPECT_TRUE(converged(r.status));
  EXPECT_NEAR(r.x_final[0], 0.3, 1e-4);
  EXPECT_NEAR(r.x_final[1], -0.4, 1e-4);
  const DescentAudit audit = audit_descent(r.trace, cfg.sigma, cfg.rho);
  EXPECT_TRUE(audit.pass());
  EXPECT_GT(audit.checked, 0u);
}

TEST(UnitStep, RhoAtTheBoundaryRejected) {
  LipschitzData lip{std::sqrt(2.18), 1.0, 1.0};
  SolverConfig cfg;
  cfg.rho = 2.0 * unit_step_constant(lip);
  try {
    run_unit_step(shipped("quad_ref"), Vec{0.0, 0.0}, cfg, lip);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RhoTooSmall);
  }
}

TEST(UnitStep, SampledConstantsOnTheRatio) {
  const Problem p = shipped("ratio1");
  const LipschitzData lip = estimate_lipschitz(p);
  EXPECT_GT(lip.Lip_grad_phi, 0.0);
  EXPECT_GT(lip.Lip_P, 0.0);
  SolverConfig cfg;
  cfg.rho = 2.5 * unit_step_constant(lip);
  cfg.max_outer = 20000;
  cfg.tol_step = 1e-10;  // steps shrink with 1/rho
  const RunResult u = run_unit_step(p, Vec{4.0}, cfg, lip);
  const RunResult a = run_algorithm1(p, Vec{4.0}, SolverConfig{});
  ASSERT_TRUE(converged(u.status));
  EXPECT_NEAR(u.x_final[0], a.x_final[0], 1e-3);
}

TEST(UnitStep, NonsmoothOuterUnsupported) {
  try {
    estimate_lipschitz(shipped("abs_split"));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::UnsupportedOuter);
  }
}

TEST(Stationarity, AbsProxFromHalf) {
  EXPECT_NEAR(stationarity_residual(abs1(), Vec{0.5}, 1.0, StationarityMode::Weak), 0.5, 1e-8);
  EXPECT_NEAR(stationarity_residual(abs1(), Vec{0.5}, 1.0, StationarityMode::Strong), 0.5, 1e-8);
}

TEST(Stationarity, CriticalVersusDirectionalGap) {
  const Problem p = shipped("dc_kink");
  const double weak = stationarity_residual(p, Vec{0.0}, 1.0, StationarityMode::Weak);
  const double strong = stationarity_residual(p, Vec{0.0}, 1.0, StationarityMode::Strong);
  EXPECT_LE(weak, 1e-8);
  EXPECT_GT(strong, 0.1);
  EXPECT_NEAR(strong, 1.0 / 3.0, 1e-6);
}

TEST(Stationarity, SmoothMinimizer) {
  const Problem p = shipped("quad_ref");
  for (auto mode : {StationarityMode::Weak, StationarityMode::Strong})
    EXPECT_LE(stationarity_residual(p, Vec{0.3, -0.4}, 1.0, mode), 1e-6);
}

TEST(Stationarity, FinalIterateOfAlgorithm1IsWeaklyStationary) {
  for (const char* name : {"sor_b", "max_ratios", "huber_dev", "separable_split"}) {
    const Problem p = shipped(name);
    SolverConfig cfg;
    const Vec x0 = p.feasible_set().project(Vec(p.dimension(), 0.7));
    const RunResult r = run_algorithm1(p, x0, cfg);
    ASSERT_TRUE(converged(r.status)) << name;
    EXPECT_LE(stationarity_residual(p, r.x_final, cfg.rho, StationarityMode::Weak, cfg.eps.at(0)),
              10.0 * cfg.step_tolerance(p.feasible_set()))
        << name;
  }
}

TEST(Config, EpsSchedule) {
  EpsSchedule geo{0.1, 1e-3, 0.5};
  EXPECT_DOUBLE_EQ(geo.at(0), 0.1);
  EXPECT_DOUBLE_EQ(geo.at(2), 0.025);
  EXPECT_DOUBLE_EQ(geo.at(50), 1e-3);
  EpsSchedule flat{0.2, 0.0, 1.0};
  EXPECT_DOUBLE_EQ(flat.at(17), 0.2);
}

TEST(Config, ValidateRejectsBadParameters) {
  auto expect_bad = [](auto mutate) {
    SolverConfig cfg;
    mutate(cfg);
    try {
      cfg.validate();
      ADD_FAILURE();
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::InvalidParameter);
    }
  };
  expect_bad([](SolverConfig& c) { c.rho = 0; });
  expect_bad([](SolverConfig& c) { c.sigma = 1; });
  expect_bad([](SolverConfig& c) { c.beta = 0; });
  expect_bad([](SolverConfig& c) { c.eps.ratio = 1.5; });
  expect_bad([](SolverConfig& c) { c.delta = -1; });
  expect_bad([](SolverConfig& c) { c.workers = 0; });
  expect_bad([](SolverConfig& c) { c.sub.tol = 0; });
  EXPECT_NO_THROW(SolverConfig{}.validate());
}

TEST(Config, DefaultStepTolerance) {
  const Problem p = shipped("sor_a");  // [0,2]^2
  EXPECT_NEAR(SolverConfig{}.step_tolerance(p.feasible_set()), 1e-6 * 2.0 * std::sqrt(2.0), 1e-18);
}
