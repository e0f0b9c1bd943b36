#pragma once

// Benchmark instances (fractional programs, Huber and SCAD composites), the
// brute-force grid oracle, and direct descent for quotient problems.

#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "qdc/algorithm.hpp"

namespace qdc {

// h(t) = t^2/2 for |t| <= delta, delta^2/2 + delta (|t| - delta) otherwise.
inline double huber(double t, double delta) { return huber_value(t, delta); }

// SCAD penalty with parameters a > 2 and delta > 0.
inline double scad(double t, double a, double delta) {
  const double at = std::abs(t);
  if (at <= delta / a) return 2.0 * a / ((a + 1.0) * delta) * at;
  if (at <= delta) {
    const double r = delta - at;
    return 1.0 - r * r / ((1.0 - 1.0 / (a * a)) * delta * delta);
  }
  return 1.0;
}

enum class Curvature { Convex, Concave, Smooth };

struct Term {
  std::string expr;
  Curvature curvature = Curvature::Smooth;
};

struct RatioPair {
  Term numerator;
  Term denominator;
};

struct KnownOptimum {
  Vec x;
  double value = 0.0;
  std::string provenance;
};

struct BenchmarkInstance {
  Problem problem;
  std::string name;
  std::optional<KnownOptimum> known_optimum;
  std::vector<std::size_t> oracle_grid;  // per-axis point counts
};

inline InnerFunction make_inner(const Term& t) {
  InnerFunction p;
  std::vector<Expr> piece{Expr::parse(t.expr)};
  switch (t.curvature) {
    case Curvature::Convex: p.cvx = ConvexMaxFn(std::move(piece)); break;
    case Curvature::Concave: p.cve = ConcaveMinFn(std::move(piece)); break;
    case Curvature::Smooth: p.diff = DiffMaxFn(std::move(piece)); break;
  }
  return p;
}

namespace detail {

inline std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return v < 0 ? "(" + std::string(buf) + ")" : std::string(buf);
}

// "y0/y1 + y2/y3 + ..." for the given number of ratios.
inline std::string quotient_sum(std::size_t ratios) {
  std::ostringstream s;
  for (std::size_t k = 0; k < ratios; ++k) s << (k ? " + " : "") << "y" << 2 * k << "/y" << 2 * k + 1;
  return s.str();
}

inline std::size_t default_grid(std::size_t n) { return n == 1 ? 400'001 : (n == 2 ? 2001 : 201); }

// Fine grid, then golden section on the bracket around the best grid point.
// Only for 1-D instances, where this is cheap and accurate.
inline KnownOptimum refined_optimum_1d(const Problem& prob) {
  const Box* box = prob.feasible_set().as_box();
  const double lo = box->lower[0], hi = box->upper[0];
  const std::size_t count = default_grid(1);
  const double h = (hi - lo) / static_cast<double>(count - 1);
  double best = std::numeric_limits<double>::infinity();
  std::size_t arg = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const double v = theta_max(prob, Vec{lo + h * static_cast<double>(i)});
    if (v < best) best = v, arg = i;
  }
  double a = std::max(lo, lo + h * (static_cast<double>(arg) - 1.0));
  double b = std::min(hi, lo + h * (static_cast<double>(arg) + 1.0));
  const double g = 0.5 * (std::sqrt(5.0) - 1.0);
  auto f = [&](double x) { return theta_max(prob, Vec{x}); };
  double c = b - g * (b - a), d = a + g * (b - a), fc = f(c), fd = f(d);
  for (int it = 0; it < 200 && b - a > 1e-15 * std::max(1.0, std::abs(a)); ++it) {
    if (fc <= fd) {
      b = d, d = c, fd = fc, c = b - g * (b - a), fc = f(c);
    } else {
      a = c, c = d, fc = fd, d = a + g * (b - a), fd = f(d);
    }
  }
  KnownOptimum out{Vec{lo + h * static_cast<double>(arg)}, best, "grid of " + std::to_string(count) + " points"};
  const double xm = 0.5 * (a + b), fm = f(xm);
  if (fm <= best) out = {Vec{xm}, fm, "grid of " + std::to_string(count) + " points refined by golden section"};
  return out;
}

inline BenchmarkInstance finish_instance(Problem prob, std::string name) {
  validate_domain(prob);
  const std::size_t n = prob.dimension();
  BenchmarkInstance inst{std::move(prob), std::move(name), std::nullopt, std::vector<std::size_t>(n, default_grid(n))};
  if (n == 1 && inst.problem.feasible_set().as_box()) inst.known_optimum = refined_optimum_1d(inst.problem);
  return inst;
}

inline void check_positive_denominators(const Problem& prob, const std::vector<RatioPair>& pairs) {
  std::mt19937_64 rng(11);
  const FeasibleSet& X = prob.feasible_set();
  for (const auto& pr : pairs) {
    const Expr d = Expr::parse(pr.denominator.expr);
    for (int s = 0; s < 1000; ++s) {
      const Vec x = s == 0 ? X.center() : X.sample(rng);
      if (!(d.value(x) > 0.0))
        throw Error(ErrorCode::DenominatorSignViolation, "denominator '" + pr.denominator.expr + "' is not positive on X");
    }
  }
}

}  // namespace detail

// phi(y) = y0/y1 with P = (n, d).
inline BenchmarkInstance make_single_ratio(const RatioPair& pair, const FeasibleSet& X, std::string name = "single_ratio") {
  Composite c{"ratio", TypeI{Expr::parse("y0/y1")}, {make_inner(pair.numerator), make_inner(pair.denominator)}};
  Problem prob(X.dimension(), X, {std::move(c)}, name);
  detail::check_positive_denominators(prob, {pair});
  return detail::finish_instance(std::move(prob), std::move(name));
}

// One composite per ratio.
inline BenchmarkInstance make_max_of_ratios(const std::vector<RatioPair>& pairs, const FeasibleSet& X,
                                            std::string name = "max_of_ratios") {
  std::vector<Composite> cs;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    cs.push_back({"ratio" + std::to_string(i), TypeI{Expr::parse("y0/y1")},
                  {make_inner(pairs[i].numerator), make_inner(pairs[i].denominator)}});
  Problem prob(X.dimension(), X, std::move(cs), name);
  detail::check_positive_denominators(prob, pairs);
  return detail::finish_instance(std::move(prob), std::move(name));
}

// One composite with phi = sum of y_{2k} / y_{2k+1}.
inline BenchmarkInstance make_sum_of_ratios(const std::vector<RatioPair>& pairs, const FeasibleSet& X,
                                            std::string name = "sum_of_ratios") {
  std::vector<InnerFunction> inner;
  for (const auto& pr : pairs) {
    inner.push_back(make_inner(pr.numerator));
    inner.push_back(make_inner(pr.denominator));
  }
  Composite c{"sum", TypeI{Expr::parse(detail::quotient_sum(pairs.size()))}, std::move(inner)};
  Problem prob(X.dimension(), X, {std::move(c)}, name);
  detail::check_positive_denominators(prob, pairs);
  return detail::finish_instance(std::move(prob), std::move(name));
}

// sum_i scad(max(g_i(x), 0)). The outer function is C^1 on the nonnegative
// arguments it receives, so the composite is handled as Type I with inner
// functions max(g_i, 0).
inline BenchmarkInstance make_scad_constraint_count(const std::vector<std::string>& g_exprs, double a,
                                                    double delta_scad, const FeasibleSet& X,
                                                    std::string name = "scad_count") {
  if (!(a > 2.0)) throw Error(ErrorCode::InvalidParameter, "SCAD needs a > 2");
  if (!(delta_scad > 0.0)) throw Error(ErrorCode::InvalidParameter, "SCAD needs delta > 0");
  if (g_exprs.empty()) throw Error(ErrorCode::InvalidParameter, "SCAD composite needs at least one constraint");
  std::vector<InnerFunction> inner;
  std::ostringstream phi;
  for (std::size_t i = 0; i < g_exprs.size(); ++i) {
    InnerFunction p;
    p.diff = DiffMaxFn({Expr::parse(g_exprs[i]), Expr::constant(0.0)});
    inner.push_back(std::move(p));
    phi << (i ? " + " : "") << "scad(y" << i << ", " << detail::num(a) << ", " << detail::num(delta_scad) << ")";
  }
  Composite c{"scad", TypeI{Expr::parse(phi.str())}, std::move(inner)};
  Problem prob(X.dimension(), X, {std::move(c)}, name);
  return detail::finish_instance(std::move(prob), std::move(name));
}

// huber(sum_k n_k/d_k - gamma, delta).
inline BenchmarkInstance make_huber_deviation(const std::vector<RatioPair>& pairs, double delta, double gamma,
                                              const FeasibleSet& X, std::string name = "huber_deviation") {
  if (!(delta > 0.0)) throw Error(ErrorCode::InvalidParameter, "Huber needs delta > 0");
  if (pairs.empty()) throw Error(ErrorCode::InvalidParameter, "Huber deviation needs at least one ratio");
  std::vector<InnerFunction> inner;
  for (const auto& pr : pairs) {
    inner.push_back(make_inner(pr.numerator));
    inner.push_back(make_inner(pr.denominator));
  }
  const std::string phi = "huber(" + detail::quotient_sum(pairs.size()) + " - " + detail::num(gamma) + ", " +
                          detail::num(delta) + ")";
  Composite c{"huber", TypeI{Expr::parse(phi)}, std::move(inner)};
  Problem prob(X.dimension(), X, {std::move(c)}, name);
  detail::check_positive_denominators(prob, pairs);
  return detail::finish_instance(std::move(prob), std::move(name));
}

// ---------------------------------------------------------------------------
// Grid oracle

struct GridResult {
  Vec x_best;
  double value_best = std::numeric_limits<double>::infinity();
  std::uint64_t points = 0;  // feasible points evaluated
};

// Exhaustive minimization of Theta_max over a uniform grid of the bounding box
// of X, skipping points outside X. Ties go to the lexicographically first point.
inline GridResult grid_oracle(const Problem& prob, const std::vector<std::size_t>& resolution, int workers = 1) {
  const std::size_t n = prob.dimension();
  if (n > 3) throw Error(ErrorCode::GridTooLarge, "grid oracle supports dimension at most 3");
  if (resolution.size() != n) throw Error(ErrorCode::InvalidParameter, "need one resolution per axis");
  std::uint64_t total = 1;
  for (std::size_t r : resolution) {
    if (r == 0) throw Error(ErrorCode::InvalidParameter, "resolution must be positive");
    total = saturating_mul(total, r);
  }
  if (total > 10'000'000) throw Error(ErrorCode::GridTooLarge, std::to_string(total) + " grid points exceed 10^7");
  const Box b = prob.feasible_set().bounding_box();
  auto coord = [&](std::size_t axis, std::size_t i) {
    if (resolution[axis] == 1) return 0.5 * (b.lower[axis] + b.upper[axis]);
    const double t = static_cast<double>(i) / static_cast<double>(resolution[axis] - 1);
    return i + 1 == resolution[axis] ? b.upper[axis] : b.lower[axis] + t * (b.upper[axis] - b.lower[axis]);
  };
  // Split along the first axis; each chunk keeps its own best.
  const std::size_t outer = resolution[0];
  const std::size_t chunks = std::min<std::size_t>(outer, static_cast<std::size_t>(std::max(1, workers)) * 8);
  std::vector<GridResult> partial(chunks);
  detail::parallel_for(chunks, workers, [&](std::uint64_t ch) {
    GridResult& best = partial[ch];
    const std::size_t lo = outer * ch / chunks, hi = outer * (ch + 1) / chunks;
    Vec x(n);
    std::vector<std::size_t> idx(n, 0);
    for (std::size_t i0 = lo; i0 < hi; ++i0) {
      x[0] = coord(0, i0);
      std::uint64_t inner = total / outer;
      for (std::uint64_t r = 0; r < inner; ++r) {
        std::uint64_t rest = r;
        for (std::size_t a = n; a-- > 1;) {
          x[a] = coord(a, static_cast<std::size_t>(rest % resolution[a]));
          rest /= resolution[a];
        }
        if (!prob.feasible_set().contains(x)) continue;
        const double v = theta_max(prob, x);
        ++best.points;
        if (v < best.value_best) {
          best.value_best = v;
          best.x_best = x;
        }
      }
    }
  });
  GridResult out;
  for (const auto& p : partial) {
    out.points += p.points;
    if (p.value_best < out.value_best) {
      out.value_best = p.value_best;
      out.x_best = p.x_best;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Direct descent for quotients n_j / d_j

enum class QuotientVariant { CvxOverCve, CvxOverDiffCvx, DiffCveOverCve };

inline std::string_view to_string(QuotientVariant v) {
  switch (v) {
    case QuotientVariant::CvxOverCve: return "cvx_over_cve";
    case QuotientVariant::CvxOverDiffCvx: return "cvx_over_diffcvx";
    case QuotientVariant::DiffCveOverCve: return "diffcve_over_cve";
  }
  return "unknown";
}

struct DenominatorBounds {
  double low = 0.0;
  double high = 0.0;
};

struct DescentCertificate {
  double theta_before = 0.0;
  double theta_after = 0.0;
  double bound = 0.0;     // theta_before - constant * |xhat - xbar|^2
  double constant = 0.0;  // rho * low / (2 high)
  bool holds = false;
};

struct DirectDescentStep {
  Vec xhat;
  SubproblemResult sub;
  DescentCertificate certificate;
};

namespace detail {

// Checks that every composite is a single quotient y0/y1 whose numerator and
// denominator have the part layout of the variant, then spot-checks signs and
// curvature on samples.
inline void check_quotient_pattern(const Problem& prob, QuotientVariant v) {
  auto mismatch = [](const std::string& m) { throw Error(ErrorCode::CurvatureMismatch, m); };
  std::mt19937_64 rng(3);
  const FeasibleSet& X = prob.feasible_set();
  for (const auto& c : prob.composites()) {
    const auto* t1 = std::get_if<TypeI>(&c.outer);
    if (!t1 || c.inner.size() != 2) mismatch("composite '" + c.label + "' is not a single quotient");
    for (int s = 0; s < 8; ++s) {
      const double y[2] = {0.3 + s, 1.7 + 0.5 * s};
      if (std::abs(t1->phi.value(y) - y[0] / y[1]) > 1e-12 * std::max(1.0, y[0] / y[1]))
        mismatch("outer of composite '" + c.label + "' is not y0/y1");
    }
    const InnerFunction& num = c.inner[0];
    const InnerFunction& den = c.inner[1];
    const bool only_cvx = [](const InnerFunction& p) { return p.cvx && !p.cve && !p.diff; }(num);
    const bool num_smooth = !num.cvx && !num.cve && num.diff && num.diff->size() == 1;
    const bool den_cve = !den.cvx && den.cve && !den.diff;
    const bool den_smooth = !den.cvx && !den.cve && den.diff && den.diff->size() == 1;
    bool ok = false;
    switch (v) {
      case QuotientVariant::CvxOverCve: ok = only_cvx && den_cve; break;
      case QuotientVariant::CvxOverDiffCvx: ok = only_cvx && den_smooth; break;
      case QuotientVariant::DiffCveOverCve: ok = num_smooth && den_cve; break;
    }
    if (!ok) mismatch("composite '" + c.label + "' does not match the " + std::string(to_string(v)) + " layout");
    for (int s = 0; s < 500; ++s) {
      const Vec u = X.sample(rng), w = X.sample(rng);
      Vec mid(u.size());
      for (std::size_t i = 0; i < u.size(); ++i) mid[i] = 0.5 * (u[i] + w[i]);
      auto slack = [](double at_mid) { return 1e-9 * std::max(1.0, std::abs(at_mid)); };
      if (num.value(u) < -1e-12) mismatch("numerator of '" + c.label + "' is negative on X");
      if (v != QuotientVariant::DiffCveOverCve && num.value(mid) > 0.5 * (num.value(u) + num.value(w)) + slack(num.value(mid)))
        mismatch("numerator of '" + c.label + "' is not convex");
      if (v != QuotientVariant::CvxOverDiffCvx && den.value(mid) < 0.5 * (den.value(u) + den.value(w)) - slack(den.value(mid)))
        mismatch("denominator of '" + c.label + "' is not concave");
      if (!(den.value(u) > 0.0)) mismatch("denominator of '" + c.label + "' is not positive on X");
      if (v == QuotientVariant::CvxOverDiffCvx && den.value(mid) > 0.5 * (den.value(u) + den.value(w)) + slack(den.value(mid)))
        mismatch("denominator of '" + c.label + "' is not convex");
      if (v == QuotientVariant::DiffCveOverCve && num.value(mid) < 0.5 * (num.value(u) + num.value(w)) - slack(num.value(mid)))
        mismatch("numerator of '" + c.label + "' is not concave");
    }
  }
}

}  // namespace detail

// Denominator range over X by dense sampling, widened by 5%.
inline DenominatorBounds estimate_denominator_bounds(const Problem& prob, std::size_t samples = 20'000,
                                                     std::uint64_t seed = 5) {
  std::mt19937_64 rng(seed);
  const FeasibleSet& X = prob.feasible_set();
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (std::size_t s = 0; s <= samples; ++s) {
    const Vec x = s == 0 ? X.center() : X.sample(rng);
    for (const auto& c : prob.composites()) {
      const double d = c.inner[1].value(x);
      lo = std::min(lo, d);
      hi = std::max(hi, d);
    }
  }
  return {0.95 * lo, 1.05 * hi};
}

// One prox step on max_j [theta_j surrogate - theta_j(xbar)] over X. The
// certificate is Theta(xhat) <= Theta(xbar) - rho low / (2 high) |xhat - xbar|^2.
inline DirectDescentStep direct_descent_step(const Problem& prob, std::span<const double> xbar, QuotientVariant variant,
                                             double rho, std::optional<DenominatorBounds> bounds = std::nullopt,
                                             const SubsolverOptions& sub = {}) {
  detail::check_quotient_pattern(prob, variant);
  const DenominatorBounds dbs = bounds ? *bounds : estimate_denominator_bounds(prob);
  if (!(dbs.low > 0.0) || !(dbs.high >= dbs.low))
    throw Error(ErrorCode::InvalidParameter, "denominator bounds must satisfy 0 < low <= high");
  SurrogateOptions opts;
  opts.include_offsets = false;
  const XiFamily fam = build_xi_family(prob, xbar, 0.0);
  const SurrogateModel model =
      build_surrogate(prob, xbar, fam.first(), std::numeric_limits<double>::infinity(), opts);
  DirectDescentStep out;
  out.sub = solve_workhorse(model, rho, prob.feasible_set(), sub);
  out.xhat = out.sub.xhat;
  DescentCertificate& cert = out.certificate;
  cert.theta_before = theta_max(prob, xbar);
  cert.theta_after = theta_max(prob, out.xhat);
  cert.constant = rho * dbs.low / (2.0 * dbs.high);
  const double d = distance(out.xhat, xbar);
  cert.bound = cert.theta_before - cert.constant * d * d;
  cert.holds = cert.theta_after <= cert.bound + 1e-12 * std::max(1.0, std::abs(cert.theta_before));
  return out;
}

// Repeated direct-descent steps with unit step size; each step must carry its
// certificate, otherwise CertificateFailed is raised.
inline RunResult run_direct_descent(const Problem& prob, std::span<const double> x0, QuotientVariant variant,
                                    const SolverConfig& cfg, std::optional<DenominatorBounds> bounds = std::nullopt) {
  detail::check_quotient_pattern(prob, variant);
  const DenominatorBounds dbs = bounds ? *bounds : estimate_denominator_bounds(prob);
  auto propose = [&](const Vec& x, double, const ThetaEval&, const SubsolverOptions& sub) {
    DirectDescentStep step = direct_descent_step(prob, x, variant, cfg.rho, dbs, sub);
    if (!step.certificate.holds)
      throw Error(ErrorCode::CertificateFailed, "descent certificate failed: Theta(xhat) = " +
                                                    std::to_string(step.certificate.theta_after) + " > " +
                                                    std::to_string(step.certificate.bound));
    detail::Proposal p;
    p.xhalf = std::move(step.xhat);
    p.objective = step.sub.objective;
    p.residual = step.sub.residual;
    p.iterations = step.sub.iterations;
    p.converged = step.sub.converged;
    return p;
  };
  detail::StepPolicy policy;
  policy.armijo = false;
  IterateTrace trace = detail::make_trace("dinkelbach_direct", cfg);
  trace.descent_constant = cfg.rho * dbs.low / (2.0 * dbs.high);
  return detail::descent_loop(prob, x0, cfg, propose, policy, Status::WeakDStationary, std::move(trace));
}


// ---------------------------------------------------------------------------
// Randomized instances for surrogate property sweeps

enum class OuterKind { I, IIUnivariate, IISeparable, IIMonotone, III, IV };

inline constexpr OuterKind kAllOuterKinds[] = {OuterKind::I,          OuterKind::IIUnivariate, OuterKind::IISeparable,
                                               OuterKind::IIMonotone, OuterKind::III,          OuterKind::IV};

inline std::string_view to_string(OuterKind k) {
  switch (k) {
    case OuterKind::I: return "I";
    case OuterKind::IIUnivariate: return "II_univariate";
    case OuterKind::IISeparable: return "II_separable";
    case OuterKind::IIMonotone: return "II_monotone";
    case OuterKind::III: return "III";
    case OuterKind::IV: return "IV";
  }
  return "unknown";
}

struct RandomInstance {
  Problem problem;
  Vec xbar;
};

namespace detail {

template <class Rng>
double uniform(Rng& rng, double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Expression for s |x - c|^2 + g . x in two variables.
template <class Rng>
std::string random_quadratic(Rng& rng, double sign) {
  std::ostringstream e;
  e << num(sign * uniform(rng, 0.2, 1.5)) << "*((x0 - " << num(uniform(rng, -1, 1)) << ")^2 + (x1 - "
    << num(uniform(rng, -1, 1)) << ")^2) + " << num(uniform(rng, -1, 1)) << "*x0 + " << num(uniform(rng, -1, 1))
    << "*x1";
  return e.str();
}

template <class Rng>
std::string random_smooth(Rng& rng) {
  std::ostringstream e;
  e << num(uniform(rng, -1, 1)) << "*sin(" << num(uniform(rng, -2, 2)) << "*x0 + " << num(uniform(rng, -2, 2))
    << "*x1) + " << num(uniform(rng, -0.5, 0.5)) << "*x0*x1 + " << num(uniform(rng, -1, 1)) << "*x1";
  return e.str();
}

// Pieces built by `make`, shifted so the first `tied` agree at xbar and the
// rest sit strictly below (above for min-type parts) by a random gap.
template <class Rng, class Make>
std::vector<std::string> tied_pieces(Rng& rng, std::span<const double> xbar, std::size_t count, std::size_t tied,
                                     double side, Make make) {
  std::vector<std::string> out;
  const double level = uniform(rng, -0.5, 0.5);
  for (std::size_t i = 0; i < count; ++i) {
    std::string body = make();
    const double v = Expr::parse(body).value(xbar);
    const double target = i < tied ? level : level - side * uniform(rng, 0.05, 0.5);
    out.push_back(body + " + " + num(target - v));
  }
  return out;
}

template <class Rng>
InnerFunction random_inner(Rng& rng, std::span<const double> xbar) {
  std::uniform_int_distribution<int> count(1, 3);
  InnerFunction p;
  auto pick_tied = [&](std::size_t c) { return c == 1 ? std::size_t{1} : std::uniform_int_distribution<std::size_t>(1, c)(rng); };
  const int mask = std::uniform_int_distribution<int>(1, 7)(rng);
  if (mask & 1) {
    const auto c = static_cast<std::size_t>(count(rng));
    p.cvx = ConvexMaxFn::parse(tied_pieces(rng, xbar, c, pick_tied(c), 1.0, [&] { return random_quadratic(rng, 1.0); }));
  }
  if (mask & 2) {
    const auto c = static_cast<std::size_t>(count(rng));
    p.cve = ConcaveMinFn::parse(tied_pieces(rng, xbar, c, pick_tied(c), -1.0, [&] { return random_quadratic(rng, -1.0); }));
  }
  if (mask & 4) {
    const auto c = static_cast<std::size_t>(count(rng));
    p.diff = DiffMaxFn::parse(tied_pieces(rng, xbar, c, pick_tied(c), 1.0, [&] { return random_smooth(rng); }));
  }
  return p;
}

// Convex scalar pieces in y0 with slopes of one sign, tied at ybar.
template <class Rng>
ConvexMaxFn random_monotone_scalar(Rng& rng, double ybar, double sign) {
  std::vector<std::string> pieces;
  const std::size_t c = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
  const std::size_t tied = std::uniform_int_distribution<std::size_t>(1, c)(rng);
  const double level = uniform(rng, -0.5, 0.5);
  for (std::size_t i = 0; i < c; ++i) {
    const double slope = sign * uniform(rng, 0.0, 2.0);
    std::string body = num(slope) + "*y0";
    if (i == 2) body = "exp(" + num(sign * uniform(rng, 0.1, 1.0)) + "*y0) + " + body;
    const double v = Expr::parse(body).value(std::span<const double>(&ybar, 1));
    const double target = i < tied ? level : level - uniform(rng, 0.05, 0.5);
    pieces.push_back(body + " + " + num(target - v));
  }
  return ConvexMaxFn::parse(pieces);
}

template <class Rng>
TypeIIUnivariate random_split(Rng& rng, double ybar) {
  TypeIIUnivariate s;
  const int mask = std::uniform_int_distribution<int>(1, 3)(rng);
  if (mask & 1) s.psi_up = random_monotone_scalar(rng, ybar, 1.0);
  if (mask & 2) s.psi_down = random_monotone_scalar(rng, ybar, -1.0);
  return s;
}

}  // namespace detail

// A random composite problem of the given outer kind on [-1, 1]^2 together
// with an interior reference point at which inner and outer pieces tie.
template <class Rng>
RandomInstance random_instance(OuterKind kind, Rng& rng) {
  using detail::num;
  using detail::uniform;
  Vec xbar = {uniform(rng, -0.8, 0.8), uniform(rng, -0.8, 0.8)};
  const std::size_t K = kind == OuterKind::IIUnivariate ? 1 : 2;
  Composite c;
  c.label = "random_" + std::string(to_string(kind));
  for (std::size_t k = 0; k < K; ++k) c.inner.push_back(detail::random_inner(rng, xbar));
  const Vec ybar = c.inner_values(xbar);
  auto tied_affine = [&](double lo, double hi, bool convex_term) {
    std::vector<std::string> pieces;
    const std::size_t count = std::uniform_int_distribution<std::size_t>(1, 3)(rng);
    const std::size_t tied = std::uniform_int_distribution<std::size_t>(1, count)(rng);
    const double level = uniform(rng, -0.5, 0.5);
    for (std::size_t i = 0; i < count; ++i) {
      const double a0 = uniform(rng, lo, hi), a1 = uniform(rng, lo, hi);
      std::string body = num(a0) + "*y0 + " + num(a1) + "*y1";
      if (convex_term && i == 1) body += " + " + num(uniform(rng, 0.1, 1.0)) + "*(y0 - " + num(uniform(rng, -1, 1)) + ")^2";
      if (convex_term && i == 2) body += " + exp(" + num(uniform(rng, -0.5, 0.5)) + "*y1)";
      const double v = Expr::parse(body).value(ybar);
      const double target = i < tied ? level : level - uniform(rng, 0.05, 0.5);
      pieces.push_back(body + " + " + num(target - v));
    }
    return ConvexMaxFn::parse(pieces);
  };
  switch (kind) {
    case OuterKind::I: {
      std::ostringstream phi;
      phi << num(uniform(rng, -1, 1)) << "*y0*y1 + " << num(uniform(rng, -1, 1)) << "*sin(y0) + exp("
          << num(uniform(rng, -0.5, 0.5)) << "*y1) + " << num(uniform(rng, -1, 1)) << "*y0";
      c.outer = TypeI{Expr::parse(phi.str())};
      break;
    }
    case OuterKind::IIUnivariate: c.outer = detail::random_split(rng, ybar[0]); break;
    case OuterKind::IISeparable: {
      TypeIISeparable s;
      for (std::size_t k = 0; k < K; ++k) s.terms.push_back(detail::random_split(rng, ybar[k]));
      c.outer = std::move(s);
      break;
    }
    case OuterKind::IIMonotone: {
      const bool iso = std::bernoulli_distribution(0.5)(rng);
      // Isotone pieces have nonnegative slopes; the squared term is kept out
      // so monotonicity holds on all of R^2.
      c.outer = TypeIIMonotone{iso ? tied_affine(0.0, 1.5, false) : tied_affine(-1.5, 0.0, false),
                               iso ? Tone::Isotone : Tone::Antitone};
      if (std::bernoulli_distribution(0.5)(rng)) {
        // Replace by pieces with an exponential term of the right monotonicity.
        std::vector<std::string> pieces;
        const double sgn = iso ? 1.0 : -1.0;
        const double level = uniform(rng, -0.5, 0.5);
        for (int i = 0; i < 2; ++i) {
          std::string body = "exp(" + num(sgn * uniform(rng, 0.1, 1.0)) + "*y0) + " + num(sgn * uniform(rng, 0.0, 1.0)) +
                             "*y1" + (i ? " + " + num(sgn * uniform(rng, 0.0, 1.0)) + "*y0" : "");
          pieces.push_back(body + " + " + num(level - Expr::parse(body).value(ybar)));
        }
        c.outer = TypeIIMonotone{ConvexMaxFn::parse(pieces), iso ? Tone::Isotone : Tone::Antitone};
      }
      break;
    }
    case OuterKind::III: {
      TypeIII t;
      const std::size_t count = std::uniform_int_distribution<std::size_t>(2, 4)(rng);
      const std::size_t tied = std::uniform_int_distribution<std::size_t>(1, count)(rng);
      const double level = uniform(rng, -0.5, 0.5);
      for (std::size_t i = 0; i < count; ++i) {
        Vec g = {uniform(rng, -1.5, 1.5), uniform(rng, -1.5, 1.5)};
        const double target = i < tied ? level : level - uniform(rng, 0.05, 0.5);
        t.offsets.push_back(target - dot(g, ybar));
        t.generators.push_back(std::move(g));
      }
      c.outer = std::move(t);
      break;
    }
    case OuterKind::IV: c.outer = TypeIV{tied_affine(-1.5, 1.5, true)}; break;
  }
  Problem prob(2, FeasibleSet::box({-1, -1}, {1, 1}), {std::move(c)}, "random_" + std::string(to_string(kind)));
  return {std::move(prob), std::move(xbar)};
}

}  // namespace qdc
