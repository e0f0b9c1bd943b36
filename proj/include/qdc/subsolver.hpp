#pragma once

// Projected subgradient solver for the strongly convex subproblem
//   minimize_{x in X}  max_j shat_j(x) + (rho/2) |x - xbar|^2.

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "qdc/surrogate.hpp"

namespace qdc {

struct SubsolverOptions {
  double tol = 1e-8;  // relative to max(1, |F(xbar)|)
  int max_iters = 50'000;
};

struct SubproblemResult {
  Vec xhat;
  double objective = 0.0;  // F(xhat)
  double residual = 0.0;   // rho |x_t - x_{t-1}| at exit
  int iterations = 0;
  bool converged = false;  // false means MaxItersExceeded; xhat is still the best iterate
};

inline double prox_objective(const SurrogateModel& model, double rho, std::span<const double> x) {
  const double d = distance(x, model.xbar());
  return model.value(x) + 0.5 * rho * d * d;
}

// Step 2 / (rho (t + 2)), warm start at xbar, best-iterate tracking. Stops once
// rho |x_t - x_{t-1}| stays below tol for 10 consecutive iterations.
inline SubproblemResult solve_workhorse(const SurrogateModel& model, double rho, const FeasibleSet& X,
                                        const SubsolverOptions& opts = {}) {
  if (!(rho > 0.0)) throw Error(ErrorCode::InvalidParameter, "rho must be positive");
  const Vec& xbar = model.xbar();
  const std::size_t n = xbar.size();
  Vec x = X.project(xbar);
  Vec g(n), trial(n);

  auto objective = [&](std::span<const double> at, std::span<double> grad) {
    double v = model.value_subgradient(at, grad);
    for (std::size_t i = 0; i < n; ++i) {
      const double d = at[i] - xbar[i];
      v += 0.5 * rho * d * d;
      grad[i] += rho * d;
    }
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteValue, "subproblem objective is not finite");
    return v;
  };

  SubproblemResult res;
  double fx = objective(x, g);
  const double scale = std::max(1.0, std::abs(fx));
  res.xhat = x;
  res.objective = fx;
  int quiet = 0;
  int t = 0;
  for (; t < opts.max_iters; ++t) {
    const double step = 2.0 / (rho * (t + 2.0));
    for (std::size_t i = 0; i < n; ++i) trial[i] = x[i] - step * g[i];
    Vec next = X.project(trial);
    const double move = rho * distance(next, x);
    x = std::move(next);
    fx = objective(x, g);
    if (fx < res.objective) {
      res.objective = fx;
      res.xhat = x;
    }
    res.residual = move;
    quiet = move < opts.tol * scale ? quiet + 1 : 0;
    if (quiet >= 10) {
      res.converged = true;
      ++t;
      break;
    }
  }
  res.iterations = t;
  return res;
}

struct CertificateReport {
  double worst_value_gap = 0.0;   // max of F(xhat) - 2 tol - F(y), positive means violation
  double worst_strong_gap = 0.0;  // max of F(xhat) + rho/2 |y - xhat|^2 - 2 tol - F(y)
  bool pass = true;
};

// Samples feasible y and checks that none beats xhat beyond tolerance, and
// that the strong-convexity growth around xhat holds.
template <class Rng>
CertificateReport check_subproblem_certificate(const SurrogateModel& model, double rho, const FeasibleSet& X,
                                               const SubproblemResult& res, double tol, Rng& rng,
                                               std::size_t samples = 20) {
  CertificateReport r;
  const double fhat = prox_objective(model, rho, res.xhat);
  r.worst_value_gap = -std::numeric_limits<double>::infinity();
  r.worst_strong_gap = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < samples; ++s) {
    const Vec y = X.sample(rng);
    const double fy = prox_objective(model, rho, y);
    const double d = distance(y, res.xhat);
    r.worst_value_gap = std::max(r.worst_value_gap, fhat - 2.0 * tol - fy);
    r.worst_strong_gap = std::max(r.worst_strong_gap, fhat + 0.5 * rho * d * d - 2.0 * tol - fy);
  }
  r.pass = r.worst_value_gap <= 0.0 && r.worst_strong_gap <= 0.0;
  return r;
}

}  // namespace qdc
