#pragma once

// Descent drivers: the Armijo method with a single tuple per iteration, the
// variant that minimizes over every tuple of the (delta-)active family, and
// the unit-step method for differentiable outer functions.

#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "qdc/subsolver.hpp"

namespace qdc {

enum class Status { WeakDStationary, DStationary, MaxOuterReached, LineSearchFailed, DescentAuditFailed };

constexpr std::string_view to_string(Status s) {
  switch (s) {
    case Status::WeakDStationary: return "WeakDStationary";
    case Status::DStationary: return "DStationary";
    case Status::MaxOuterReached: return "MaxOuterReached";
    case Status::LineSearchFailed: return "LineSearchFailed";
    case Status::DescentAuditFailed: return "DescentAuditFailed";
  }
  return "Unknown";
}

inline bool converged(Status s) { return s == Status::WeakDStationary || s == Status::DStationary; }

// eps_nu = max(eps_inf, eps0 * ratio^nu); ratio = 1 gives a constant schedule.
struct EpsSchedule {
  double eps0 = 0.1;
  double eps_inf = 0.0;
  double ratio = 0.9;

  double at(int nu) const { return std::max(eps_inf, eps0 * std::pow(ratio, nu)); }
};

struct SolverConfig {
  double rho = 1.0;
  double sigma = 0.5;
  double beta = 0.5;
  EpsSchedule eps;
  double delta = 0.0;       // activity band for tuple enumeration (all-tuples method)
  double tol_step = 0.0;    // <= 0 selects 1e-6 * diameter(X)
  int max_outer = 500;
  int max_backtracks = 60;
  SubsolverOptions sub;
  std::uint64_t family_cap = kDefaultFamilyCap;
  int workers = 1;
  bool record_timing = false;

  void validate() const {
    auto bad = [](const std::string& m) { throw Error(ErrorCode::InvalidParameter, m); };
    if (!(rho > 0.0)) bad("rho must be positive");
    if (!(sigma > 0.0 && sigma < 1.0)) bad("sigma must lie in (0, 1)");
    if (!(beta > 0.0 && beta < 1.0)) bad("beta must lie in (0, 1)");
    if (!(eps.eps0 >= 0.0) || !(eps.eps_inf >= 0.0)) bad("eps schedule must be nonnegative");
    if (!(eps.ratio > 0.0 && eps.ratio <= 1.0)) bad("eps ratio must lie in (0, 1]");
    if (!(delta >= 0.0)) bad("delta must be nonnegative");
    if (max_outer < 0 || max_backtracks < 0) bad("iteration limits must be nonnegative");
    if (!(sub.tol > 0.0) || sub.max_iters <= 0) bad("subsolver tolerance and iteration cap must be positive");
    if (workers < 1) bad("workers must be at least 1");
  }

  double step_tolerance(const FeasibleSet& X) const { return tol_step > 0.0 ? tol_step : 1e-6 * X.diameter(); }
};

struct TupleRule {
  enum class Kind { First, Random };
  Kind kind = Kind::First;
  std::uint64_t seed = 0;

  static TupleRule first() { return {}; }
  static TupleRule random(std::uint64_t seed) { return {Kind::Random, seed}; }
};

struct IterRecord {
  int iter = 0;
  Vec x;
  double theta_max = 0.0;
  double step = 0.0;
  int backtracks = 0;
  double dx_half_norm = 0.0;
  double sub_residual = 0.0;
  double sub_objective = 0.0;
  int sub_iterations = 0;
  bool sub_converged = true;
  double eps = 0.0;
  std::uint64_t tuple_id = 0;
  std::uint64_t family_size = 1;
  double wall_ms = 0.0;
  std::vector<int> mtheta;
  std::vector<int> mtheta_eps;
  std::vector<int> boundary;
};

struct IterateTrace {
  std::string algorithm;
  double rho = 0.0;
  double sigma = 0.0;
  double beta = 0.0;
  double descent_constant = std::numeric_limits<double>::quiet_NaN();  // unit-step C
  std::vector<IterRecord> records;
};

struct RunResult {
  Vec x_final;
  double theta_final = 0.0;
  Status status = Status::MaxOuterReached;
  IterateTrace trace;
  std::string message;
  // Set when the last accepted steps all fell below 1e-6; the limit may then
  // violate the conditions that make it stationary, so it deserves a look.
  bool steps_vanishing = false;
};

struct ArmijoResult {
  int m = 0;
  double tau = 1.0;
  double theta_new = 0.0;
  bool ok = false;
};

// Smallest m with Theta(x + beta^m d) - Theta(x) <= -(sigma rho / 2) beta^m |d|^2.
inline ArmijoResult armijo_search(const Problem& prob, std::span<const double> x, std::span<const double> d, double sigma,
                                  double beta, double rho, int max_backtracks,
                                  std::optional<double> theta_x = std::nullopt) {
  const double th0 = theta_x ? *theta_x : theta_max(prob, x);
  const double dd = dot(d, d);
  ArmijoResult r;
  double tau = 1.0;
  for (int m = 0; m <= max_backtracks; ++m, tau *= beta) {
    const Vec trial = prob.feasible_set().project(axpy(x, tau, d));
    const double th = theta_max(prob, trial);
    if (th - th0 <= -0.5 * sigma * rho * tau * dd) {
      r = {m, tau, th, true};
      return r;
    }
  }
  r.m = max_backtracks;
  r.tau = tau / beta;
  r.theta_new = th0;
  r.ok = false;
  return r;
}

namespace detail {

struct Proposal {
  Vec xhalf;
  double objective = 0.0;
  double residual = 0.0;
  int iterations = 0;
  bool converged = true;
  std::uint64_t tuple_id = 0;
  std::uint64_t family_size = 1;
};

using Proposer = std::function<Proposal(const Vec& x, double eps, const ThetaEval& ev, const SubsolverOptions& sub)>;

// Returns true when the unit step from x to xnew is acceptable.
using UnitAudit = std::function<bool(const Vec& x, const Vec& xnew, double th, double th_new)>;

struct StepPolicy {
  bool armijo = true;
  UnitAudit audit;  // unit steps only
};

inline RunResult descent_loop(const Problem& prob, std::span<const double> x0, const SolverConfig& cfg,
                              const Proposer& propose, const StepPolicy& policy, Status stationary,
                              IterateTrace trace) {
  cfg.validate();
  const FeasibleSet& X = prob.feasible_set();
  if (x0.size() != prob.dimension()) throw Error(ErrorCode::InvalidParameter, "start point has the wrong dimension");
  if (!X.contains(x0, 1e-9)) throw Error(ErrorCode::InvalidParameter, "start point is not feasible");
  const double tol_step = cfg.step_tolerance(X);
  Vec x = X.project(x0);
  RunResult res;
  res.status = Status::MaxOuterReached;
  using clock = std::chrono::steady_clock;

  for (int nu = 0;; ++nu) {
    const auto t0 = clock::now();
    const double eps = cfg.eps.at(nu);
    const ThetaEval ev = eval_theta_max(prob, x, eps, cfg.delta);
    Proposal prop = propose(x, eps, ev, cfg.sub);

    IterRecord rec;
    rec.iter = nu;
    rec.x = x;
    rec.theta_max = ev.value;
    rec.eps = eps;
    rec.mtheta = ev.active.mtheta;
    rec.mtheta_eps = ev.active.mtheta_eps;
    rec.boundary = ev.active.boundary;
    auto fill_sub = [&](const Proposal& p) {
      rec.dx_half_norm = distance(p.xhalf, x);
      rec.sub_residual = p.residual;
      rec.sub_objective = p.objective;
      rec.sub_iterations = p.iterations;
      rec.sub_converged = p.converged;
      rec.tuple_id = p.tuple_id;
      rec.family_size = p.family_size;
    };
    fill_sub(prop);
    auto finish = [&](Status s) {
      res.status = s;
      if (cfg.record_timing)
        rec.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
      trace.records.push_back(std::move(rec));
    };

    if (rec.dx_half_norm <= tol_step) {
      finish(stationary);
      break;
    }
    if (nu >= cfg.max_outer) {
      finish(Status::MaxOuterReached);
      break;
    }

    Vec d = sub(prop.xhalf, x);
    Vec xnext;
    double th_next = ev.value;
    if (policy.armijo) {
      ArmijoResult arm = armijo_search(prob, x, d, cfg.sigma, cfg.beta, cfg.rho, cfg.max_backtracks, ev.value);
      if (!arm.ok) {
        // Inexact subproblem solutions can spoil the descent direction: tighten once.
        SubsolverOptions tighter = cfg.sub;
        tighter.tol *= 0.5;
        prop = propose(x, eps, ev, tighter);
        fill_sub(prop);
        if (rec.dx_half_norm <= tol_step) {
          finish(stationary);
          break;
        }
        d = sub(prop.xhalf, x);
        arm = armijo_search(prob, x, d, cfg.sigma, cfg.beta, cfg.rho, cfg.max_backtracks, ev.value);
      }
      if (!arm.ok) {
        rec.backtracks = arm.m;
        res.message = "no Armijo step within " + std::to_string(cfg.max_backtracks) + " backtracks";
        finish(Status::LineSearchFailed);
        break;
      }
      rec.step = arm.tau;
      rec.backtracks = arm.m;
      xnext = X.project(axpy(x, arm.tau, d));
      th_next = arm.theta_new;
    } else {
      xnext = X.project(prop.xhalf);
      th_next = theta_max(prob, xnext);
      rec.step = 1.0;
      if (policy.audit && !policy.audit(x, xnext, ev.value, th_next)) {
        res.message = "sufficient-descent audit failed at iteration " + std::to_string(nu);
        finish(Status::DescentAuditFailed);
        break;
      }
    }
    if (cfg.record_timing) rec.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
    trace.records.push_back(std::move(rec));
    x = std::move(xnext);
  }

  res.x_final = x;
  res.theta_final = theta_max(prob, x);
  res.trace = std::move(trace);
  int small = 0;
  int seen = 0;
  for (auto it = res.trace.records.rbegin(); it != res.trace.records.rend() && seen < 5; ++it) {
    if (it->step <= 0.0) continue;
    ++seen;
    if (it->step <= 1e-6) ++small;
  }
  res.steps_vanishing = seen == 5 && small == 5;
  return res;
}

inline IterateTrace make_trace(std::string name, const SolverConfig& cfg) {
  IterateTrace t;
  t.algorithm = std::move(name);
  t.rho = cfg.rho;
  t.sigma = cfg.sigma;
  t.beta = cfg.beta;
  return t;
}

// Runs f(i) for i in [0, count) on up to `workers` threads.
inline void parallel_for(std::uint64_t count, int workers, const std::function<void(std::uint64_t)>& f) {
  const int threads = static_cast<int>(std::min<std::uint64_t>(static_cast<std::uint64_t>(std::max(1, workers)), count));
  if (threads <= 1) {
    for (std::uint64_t i = 0; i < count; ++i) f(i);
    return;
  }
  std::atomic<std::uint64_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::uint64_t i = next++; i < count; i = next++) {
        try {
          f(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

// One tuple per iteration, chosen by the rule; Armijo step along xhalf - x.
inline RunResult run_algorithm1(const Problem& prob, std::span<const double> x0, const SolverConfig& cfg,
                                TupleRule rule = TupleRule::first()) {
  std::mt19937_64 rng(rule.seed);
  auto propose = [&](const Vec& x, double eps, const ThetaEval& ev, const SubsolverOptions& sub) {
    const XiFamily fam = build_xi_family(prob, x, 0.0);
    const auto& members = ev.active.mtheta_eps;
    detail::Proposal p;
    p.family_size = fam.size(members);
    p.tuple_id = 0;
    if (rule.kind == TupleRule::Kind::Random && p.family_size > 1)
      p.tuple_id = std::uniform_int_distribution<std::uint64_t>(0, p.family_size - 1)(rng);
    const SurrogateModel model = build_surrogate(prob, x, fam.at(members, p.tuple_id), eps);
    SubproblemResult r = solve_workhorse(model, cfg.rho, prob.feasible_set(), sub);
    p.xhalf = std::move(r.xhat);
    p.objective = r.objective;
    p.residual = r.residual;
    p.iterations = r.iterations;
    p.converged = r.converged;
    return p;
  };
  return detail::descent_loop(prob, x0, cfg, propose, {}, Status::WeakDStationary,
                              detail::make_trace("alg1", cfg));
}

// Solves the workhorse for every tuple of the joint delta-active family and
// keeps the minimizer, lowest tuple id on ties.
inline RunResult run_algorithm2(const Problem& prob, std::span<const double> x0, const SolverConfig& cfg) {
  auto propose = [&](const Vec& x, double eps, const ThetaEval& ev, const SubsolverOptions& sub) {
    const XiFamily fam = build_xi_family(prob, x, cfg.delta);
    const auto& members = ev.active.mtheta_eps;
    const std::uint64_t size = fam.size(members);
    if (size > cfg.family_cap)
      throw Error(ErrorCode::FamilyTooLarge, "joint tuple family has " + std::to_string(size) + " members (cap " +
                                                 std::to_string(cfg.family_cap) + ")");
    std::vector<SubproblemResult> results(size);
    SurrogateOptions opts;
    opts.delta = cfg.delta;
    detail::parallel_for(size, cfg.workers, [&](std::uint64_t id) {
      const SurrogateModel model = build_surrogate(prob, x, fam.at(members, id), eps, opts);
      results[id] = solve_workhorse(model, cfg.rho, prob.feasible_set(), sub);
    });
    std::uint64_t best = 0;
    for (std::uint64_t id = 1; id < size; ++id)
      if (results[id].objective < results[best].objective) best = id;
    detail::Proposal p;
    p.family_size = size;
    p.tuple_id = best;
    p.xhalf = std::move(results[best].xhat);
    p.objective = results[best].objective;
    p.residual = results[best].residual;
    p.iterations = results[best].iterations;
    p.converged = results[best].converged;
    return p;
  };
  return detail::descent_loop(prob, x0, cfg, propose, {}, Status::DStationary, detail::make_trace("alg2", cfg));
}

// ---------------------------------------------------------------------------
// Unit steps

struct LipschitzData {
  double B_grad_phi = 0.0;    // bound on |grad phi| over P(X)
  double Lip_grad_phi = 0.0;  // Lipschitz constant of grad phi over P(X)
  double Lip_P = 0.0;         // Lipschitz constant of P over X
};

inline double unit_step_constant(const LipschitzData& L) {
  return L.Lip_grad_phi * L.Lip_P * L.Lip_P + L.B_grad_phi * L.Lip_grad_phi;
}

// Sampled estimates with a factor 2 of safety. Needs differentiable outers.
inline LipschitzData estimate_lipschitz(const Problem& prob, std::size_t samples = 2000, std::uint64_t seed = 7) {
  std::mt19937_64 rng(seed);
  const FeasibleSet& X = prob.feasible_set();
  const std::size_t n = prob.dimension();
  LipschitzData out;
  std::vector<Vec> xs;
  xs.push_back(X.center());
  for (std::size_t s = 0; s < samples; ++s) xs.push_back(X.sample(rng));
  for (const auto& c : prob.composites()) {
    const auto* t1 = std::get_if<TypeI>(&c.outer);
    if (!t1) throw Error(ErrorCode::UnsupportedOuter, "unit steps need differentiable (Type I) outer functions");
    const std::size_t K = c.inner.size();
    std::vector<Vec> ys;
    Vec g(n), gy(K), gy2(K);
    for (const Vec& x : xs) {
      // Frobenius norm of the Jacobian of active pieces bounds its operator norm.
      double frob = 0.0;
      for (const auto& p : c.inner) {
        Vec row(n, 0.0);
        if (p.cvx) {
          p.cvx->value_gradient(x, g);
          add_scaled(row, 1.0, g);
        }
        if (p.cve) {
          p.cve->value_gradient(x, g);
          add_scaled(row, 1.0, g);
        }
        if (p.diff) {
          p.diff->value_gradient(x, g);
          add_scaled(row, 1.0, g);
        }
        frob += dot(row, row);
      }
      out.Lip_P = std::max(out.Lip_P, std::sqrt(frob));
      ys.push_back(c.inner_values(x));
    }
    for (std::size_t s = 1; s < xs.size(); ++s) {
      const double dx = distance(xs[s], xs[s - 1]);
      if (dx > 0) out.Lip_P = std::max(out.Lip_P, distance(ys[s], ys[s - 1]) / dx);
    }
    Vec ylo = ys[0], yhi = ys[0];
    for (const Vec& y : ys)
      for (std::size_t k = 0; k < K; ++k) {
        ylo[k] = std::min(ylo[k], y[k]);
        yhi[k] = std::max(yhi[k], y[k]);
      }
    for (const Vec& y : ys) {
      t1->phi.gradient(y, gy);
      out.B_grad_phi = std::max(out.B_grad_phi, norm(gy));
      // Hessian columns by differences of gradients; their Frobenius norm bounds the operator norm.
      double frob = 0.0;
      for (std::size_t k = 0; k < K; ++k) {
        const double h = 1e-5 * std::max(1.0, yhi[k] - ylo[k]);
        Vec yp = y;
        yp[k] += h;
        t1->phi.gradient(yp, gy2);
        for (std::size_t i = 0; i < K; ++i) {
          const double col = (gy2[i] - gy[i]) / h;
          frob += col * col;
        }
      }
      out.Lip_grad_phi = std::max(out.Lip_grad_phi, std::sqrt(frob));
    }
  }
  out.B_grad_phi *= 2.0;
  out.Lip_grad_phi *= 2.0;
  out.Lip_P *= 2.0;
  return out;
}

// x^{nu+1} = workhorse solution (first tuple), no line search. Each step must
// satisfy Theta(x+) - Theta(x) <= -(rho/2 - C) |x+ - x|^2 up to 1e-7.
inline RunResult run_unit_step(const Problem& prob, std::span<const double> x0, const SolverConfig& cfg,
                               const LipschitzData& lip) {
  const double C = unit_step_constant(lip);
  if (!(cfg.rho > 2.0 * C))
    throw Error(ErrorCode::RhoTooSmall, "rho = " + std::to_string(cfg.rho) + " must exceed 2C = " + std::to_string(2.0 * C));
  auto propose = [&](const Vec& x, double eps, const ThetaEval& ev, const SubsolverOptions& sub) {
    const XiFamily fam = build_xi_family(prob, x, 0.0);
    const SurrogateModel model = build_surrogate(prob, x, fam.at(ev.active.mtheta_eps, 0), eps);
    SubproblemResult r = solve_workhorse(model, cfg.rho, prob.feasible_set(), sub);
    detail::Proposal p;
    p.family_size = fam.size(ev.active.mtheta_eps);
    p.xhalf = std::move(r.xhat);
    p.objective = r.objective;
    p.residual = r.residual;
    p.iterations = r.iterations;
    p.converged = r.converged;
    return p;
  };
  detail::StepPolicy policy;
  policy.armijo = false;
  const double coef = 0.5 * cfg.rho - C;
  policy.audit = [coef](const Vec& x, const Vec& xnew, double th, double th_new) {
    const double d = distance(x, xnew);
    return th_new - th <= -coef * d * d + 1e-7;
  };
  IterateTrace trace = detail::make_trace("unitstep", cfg);
  trace.descent_constant = C;
  return detail::descent_loop(prob, x0, cfg, propose, policy, Status::WeakDStationary, std::move(trace));
}

// ---------------------------------------------------------------------------

enum class StationarityMode { Weak, Strong };

// Weak: min over tuples of |xhat(tuple) - x|. Strong: max over the full family.
// In weak mode a family above the cap is scanned only up to the cap, which
// gives an upper bound on the weak residual.
inline double stationarity_residual(const Problem& prob, std::span<const double> x, double rho, StationarityMode mode,
                                    double eps = 0.0, const SubsolverOptions& sub = {},
                                    std::uint64_t cap = kDefaultFamilyCap) {
  const Vec th = theta_values(prob, x);
  const std::vector<int> members = eps_active(th, eps);
  const XiFamily fam = build_xi_family(prob, x, 0.0);
  std::uint64_t size = fam.size(members);
  if (size > cap) {
    if (mode == StationarityMode::Strong)
      throw Error(ErrorCode::FamilyTooLarge, "tuple family has " + std::to_string(size) + " members");
    size = cap;
  }
  double out = mode == StationarityMode::Weak ? std::numeric_limits<double>::infinity() : 0.0;
  for (std::uint64_t id = 0; id < size; ++id) {
    const SurrogateModel model = build_surrogate(prob, x, fam.at(members, id), eps);
    const double r = distance(solve_workhorse(model, rho, prob.feasible_set(), sub).xhat, x);
    out = mode == StationarityMode::Weak ? std::min(out, r) : std::max(out, r);
  }
  return out;
}

}  // namespace qdc
