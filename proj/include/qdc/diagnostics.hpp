#pragma once

// Post-hoc audits: descent inequalities on traces, finite-difference checks of
// directional derivatives, surrogate property sweeps and empirical rate fits.

#include <algorithm>
#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "qdc/algorithm.hpp"

namespace qdc {

struct DescentAudit {
  std::string kind;  // "armijo", "unit_step" or "certified"
  std::size_t checked = 0;
  std::size_t violations = 0;
  double worst_slack = std::numeric_limits<double>::infinity();  // rhs - lhs, negative means violated
  int worst_iter = -1;
  double coefficient = 0.0;   // c in Theta(x+) - Theta(x) <= -c |x+ - x|^2 for unit and certified steps
  bool monotone = true;       // Theta nonincreasing wherever step > 0
  int first_increase = -1;
  int max_backtracks = 0;
  bool pass() const { return violations == 0 && monotone; }
};

// Re-checks the per-step descent inequality from recorded quantities. Armijo
// traces use slack 1e-9; unit-step traces use (rho/2 - C) with slack 1e-7,
// where C comes from the trace; certified traces use the stored constant.
inline DescentAudit audit_descent(const IterateTrace& trace, double sigma, double rho) {
  DescentAudit a;
  const bool unit = trace.algorithm == "unitstep";
  const bool certified = trace.algorithm == "dinkelbach_direct";
  a.kind = unit ? "unit_step" : (certified ? "certified" : "armijo");
  if (unit) a.coefficient = 0.5 * rho - trace.descent_constant;
  if (certified) a.coefficient = trace.descent_constant;
  const double slack_tol = unit ? 1e-7 : 1e-9;
  const auto& recs = trace.records;
  for (std::size_t k = 0; k + 1 < recs.size(); ++k) {
    const IterRecord& r = recs[k];
    a.max_backtracks = std::max(a.max_backtracks, r.backtracks);
    if (!(r.step > 0.0)) continue;
    const double change = recs[k + 1].theta_max - r.theta_max;
    double bound;
    if (unit || certified) {
      const double d = distance(recs[k + 1].x, r.x);
      bound = -a.coefficient * d * d;
    } else {
      bound = -0.5 * sigma * rho * r.step * r.dx_half_norm * r.dx_half_norm;
    }
    const double slack = bound - change;
    ++a.checked;
    if (slack < a.worst_slack) {
      a.worst_slack = slack;
      a.worst_iter = r.iter;
    }
    if (slack < -slack_tol) ++a.violations;
    if (change > 0.0 && a.monotone) {
      a.monotone = false;
      a.first_increase = r.iter;
    }
  }
  if (!recs.empty()) a.max_backtracks = std::max(a.max_backtracks, recs.back().backtracks);
  return a;
}

// ---------------------------------------------------------------------------

struct FdReport {
  std::size_t checks = 0;
  double max_error = 0.0;
  Vec worst_x;
  Vec worst_v;
  bool pass = true;
};

// |theta_max_dd(x; v) - (Theta(x + h v) - Theta(x)) / h| over all pairs.
inline FdReport fd_directional_check(const Problem& prob, const std::vector<Vec>& points, const std::vector<Vec>& dirs,
                                     double h = 1e-6) {
  FdReport r;
  for (const Vec& x : points) {
    const double th = theta_max(prob, x);
    for (const Vec& v : dirs) {
      const double fd = (theta_max(prob, axpy(x, h, v)) - th) / h;
      const double err = std::abs(theta_max_dd(prob, x, v) - fd);
      ++r.checks;
      if (err > r.max_error || r.worst_x.empty()) {
        r.max_error = std::max(r.max_error, err);
        r.worst_x = x;
        r.worst_v = v;
      }
    }
  }
  r.pass = r.max_error <= 1e-3;
  return r;
}

// Points drawn from the box shrunk by `margin` (relative) and kept inside X;
// directions uniform on the unit sphere.
template <class Rng>
std::vector<Vec> interior_points(const FeasibleSet& X, std::size_t count, Rng& rng, double margin = 0.01) {
  const Box b = X.bounding_box();
  std::vector<Vec> out;
  std::size_t attempts = 0;
  while (out.size() < count && attempts < 1000 * count) {
    ++attempts;
    Vec x(b.lower.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double w = b.upper[i] - b.lower[i];
      std::uniform_real_distribution<double> u(b.lower[i] + margin * w, b.upper[i] - margin * w);
      x[i] = w > 0 ? u(rng) : b.lower[i];
    }
    if (X.contains(x)) out.push_back(std::move(x));
  }
  return out;
}

template <class Rng>
std::vector<Vec> unit_directions(std::size_t n, std::size_t count, Rng& rng) {
  std::normal_distribution<double> g;
  std::vector<Vec> out;
  while (out.size() < count) {
    Vec v(n);
    for (double& c : v) c = g(rng);
    const double len = norm(v);
    if (len < 1e-12) continue;
    for (double& c : v) c /= len;
    out.push_back(std::move(v));
  }
  return out;
}

// ---------------------------------------------------------------------------

struct SurrogateSweep {
  std::size_t models = 0;
  double max_touching = 0.0;
  std::size_t dominance_checks = 0;
  std::size_t dominance_violations = 0;
  std::size_t closure_failures = 0;
  double worst_convexity = 0.0;
  std::size_t majorization_violations = 0;
  bool pass(double touch_tol = 1e-9) const {
    return max_touching <= touch_tol && dominance_violations == 0 && closure_failures == 0 &&
           worst_convexity <= 1e-9 && majorization_violations == 0;
  }
};

// Touching, dominance, convexity and local majorization of the surrogate
// family at sampled points, every tuple of the eps-active family up to `tuples`.
template <class Rng>
SurrogateSweep sweep_surrogates(const Problem& prob, const std::vector<Vec>& points, Rng& rng, double eps = 0.0,
                                std::size_t tuples = 16, std::size_t directions = 12) {
  SurrogateSweep s;
  const std::vector<Vec> dirs = unit_directions(prob.dimension(), directions, rng);
  const double diam = prob.feasible_set().diameter();
  const std::vector<double> taus = {1e-4 * diam, 1e-3 * diam};
  for (const Vec& x : points) {
    const XiFamily fam = build_xi_family(prob, x, 0.0);
    const std::vector<int> members = eps_active(theta_values(prob, x), eps);
    const std::uint64_t size = std::min<std::uint64_t>(fam.size(members), tuples);
    for (std::uint64_t id = 0; id < size; ++id) {
      const SurrogateModel m = build_surrogate(prob, x, fam.at(members, id), eps);
      ++s.models;
      s.max_touching = std::max(s.max_touching, check_touching(m).max_deviation);
      const DominanceReport d = check_dominance(m, dirs);
      s.dominance_checks += d.checks;
      s.dominance_violations += d.violations;
      s.closure_failures += d.closure_failures;
      s.worst_convexity = std::max(s.worst_convexity, check_convexity(m, 8, rng).worst_violation);
      s.majorization_violations += check_local_majorization(m, dirs, taus).violations;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------

enum class Regime { Finite, Linear, Sublinear };

inline std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::Finite: return "finite";
    case Regime::Linear: return "linear";
    case Regime::Sublinear: return "sublinear";
  }
  return "unknown";
}

struct RateFit {
  Regime regime = Regime::Linear;
  double q = 0.0;         // contraction factor of the log-linear fit
  double exponent = 0.0;  // e_nu ~ nu^(-exponent) in the log-log fit
  double r2_linear = 0.0;
  double r2_sublinear = 0.0;
  std::size_t tail_start = 0;
  std::size_t tail_points = 0;
  bool confident = false;  // best r2 >= 0.9; otherwise the regime is only a guess
  double r2() const { return regime == Regime::Sublinear ? r2_sublinear : r2_linear; }
};

namespace detail {

struct LineFit {
  double slope = 0.0;
  double r2 = 0.0;
};

inline LineFit least_squares(const std::vector<double>& t, const std::vector<double>& y) {
  const double m = static_cast<double>(t.size());
  double st = 0, sy = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    st += t[i];
    sy += y[i];
  }
  const double tb = st / m, yb = sy / m;
  double stt = 0, sty = 0, syy = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    stt += (t[i] - tb) * (t[i] - tb);
    sty += (t[i] - tb) * (y[i] - yb);
    syy += (y[i] - yb) * (y[i] - yb);
  }
  LineFit f;
  f.slope = stt > 0 ? sty / stt : 0.0;
  f.r2 = syy > 0 && stt > 0 ? sty * sty / (stt * syy) : 1.0;
  return f;
}

}  // namespace detail

// Classifies the tail of e_nu = |x^nu - x_final|. Only the trailing half of
// the trace is used, minus the points where e_nu is within 10x of the
// estimated distance from x_final to the true limit.
inline RateFit fit_rate(const IterateTrace& trace) {
  const auto& recs = trace.records;
  if (recs.size() < 20)
    throw Error(ErrorCode::InsufficientData, "rate fit needs at least 20 iterates, got " + std::to_string(recs.size()));
  const std::size_t L = recs.size();
  const Vec& xf = recs.back().x;
  const double scale = std::max(1.0, norm(xf));
  RateFit fit;
  fit.tail_start = L / 2;

  // Finite termination: the last iterate is an exact fixed point and earlier
  // iterates already coincide with it.
  if (recs.back().dx_half_norm <= 1e-14 * scale && distance(recs[L - 2].x, xf) <= 1e-14 * scale) {
    fit.regime = Regime::Finite;
    fit.confident = true;
    fit.r2_linear = fit.r2_sublinear = 1.0;
    return fit;
  }

  // Step norms s_k = |x^{k+1} - x^k| and their median ratio over the tail.
  std::vector<double> steps;
  for (std::size_t k = 0; k + 1 < L; ++k) steps.push_back(distance(recs[k + 1].x, recs[k].x));
  std::vector<double> ratios;
  for (std::size_t k = fit.tail_start; k + 1 < steps.size(); ++k)
    if (steps[k] > 0) ratios.push_back(steps[k + 1] / steps[k]);
  double qhat = 0.0;
  if (!ratios.empty()) {
    std::nth_element(ratios.begin(), ratios.begin() + ratios.size() / 2, ratios.end());
    qhat = std::min(ratios[ratios.size() / 2], 0.999);
  }
  const double s_last = steps.empty() ? 0.0 : steps.back();
  const double final_error = s_last * qhat / (1.0 - qhat);
  const double cutoff = std::max(10.0 * final_error, 10.0 * s_last);

  std::vector<double> t_lin, t_log, y;
  for (std::size_t k = fit.tail_start; k + 1 < L; ++k) {
    const double e = distance(recs[k].x, xf);
    if (!(e > cutoff)) continue;
    t_lin.push_back(static_cast<double>(k));
    t_log.push_back(std::log(static_cast<double>(k + 1)));
    y.push_back(std::log(e));
  }
  fit.tail_points = y.size();
  if (y.size() < 5)
    throw Error(ErrorCode::InsufficientData,
                "only " + std::to_string(y.size()) + " tail points remain above the final-error cutoff");
  const detail::LineFit lin = detail::least_squares(t_lin, y);
  const detail::LineFit sub = detail::least_squares(t_log, y);
  fit.q = std::exp(lin.slope);
  fit.exponent = -sub.slope;
  fit.r2_linear = lin.r2;
  fit.r2_sublinear = sub.r2;
  fit.regime = lin.r2 >= sub.r2 && fit.q < 1.0 ? Regime::Linear : Regime::Sublinear;
  fit.confident = std::max(lin.r2, sub.r2) >= 0.9;
  return fit;
}

}  // namespace qdc
