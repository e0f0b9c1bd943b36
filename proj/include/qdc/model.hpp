#pragma once

// Problem representation: piecewise inner functions, typed outer functions,
// composites theta_j = phi_j o P^j, and the objective max_j theta_j over X.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "qdc/error.hpp"
#include "qdc/expr.hpp"
#include "qdc/feasible.hpp"
#include "qdc/vec.hpp"

namespace qdc {

// A piece is active when it is a numerical tie with the extreme value.
inline double activity_tol(double extreme) { return std::max(1e-9, 1e-9 * std::abs(extreme)); }

struct ConvexTag {
  static constexpr bool is_min = false;
};
struct ConcaveTag {
  static constexpr bool is_min = true;
};
struct DiffTag {
  static constexpr bool is_min = false;
};

// Pointwise max (or min, for concave pieces) of finitely many smooth functions.
// The tag records the curvature the caller asserts for every piece.
template <class Tag>
class PieceFn {
 public:
  static constexpr bool is_min = Tag::is_min;

  PieceFn() = default;

  explicit PieceFn(std::vector<Expr> pieces) : pieces_(std::move(pieces)) {
    if (pieces_.empty()) throw Error(ErrorCode::InvalidParameter, "piecewise function needs at least one piece");
  }

  static PieceFn parse(const std::vector<std::string>& sources) {
    std::vector<Expr> out;
    out.reserve(sources.size());
    for (const auto& s : sources) out.push_back(Expr::parse(s));
    return PieceFn(std::move(out));
  }

  const std::vector<Expr>& pieces() const { return pieces_; }
  std::size_t size() const { return pieces_.size(); }

  std::size_t arity() const {
    std::size_t a = 0;
    for (const auto& p : pieces_) a = std::max(a, p.arity());
    return a;
  }

  // Extreme value and the first piece attaining it.
  std::pair<double, int> value_index(std::span<const double> x) const {
    double best = pieces_[0].value(x);
    int arg = 0;
    for (std::size_t i = 1; i < pieces_.size(); ++i) {
      const double v = pieces_[i].value(x);
      if (is_min ? v < best : v > best) {
        best = v;
        arg = static_cast<int>(i);
      }
    }
    return {best, arg};
  }

  double value(std::span<const double> x) const { return value_index(x).first; }

  double piece_value(int i, std::span<const double> x) const { return pieces_[static_cast<std::size_t>(i)].value(x); }

  double piece_gradient(int i, std::span<const double> x, std::span<double> grad) const {
    return pieces_[static_cast<std::size_t>(i)].gradient(x, grad);
  }

  // Value and gradient of the first extreme piece (a subgradient for convex
  // max, a supergradient for concave min).
  double value_gradient(std::span<const double> x, std::span<double> grad) const {
    const int i = value_index(x).second;
    return piece_gradient(i, x, grad);
  }

  // Pieces within delta of the extreme, with the numerical tie tolerance.
  std::vector<int> active(std::span<const double> x, double delta = 0.0) const {
    Vec vals(pieces_.size());
    for (std::size_t i = 0; i < pieces_.size(); ++i) vals[i] = pieces_[i].value(x);
    const double ext = is_min ? *std::min_element(vals.begin(), vals.end())
                              : *std::max_element(vals.begin(), vals.end());
    const double band = delta + activity_tol(ext);
    std::vector<int> out;
    for (std::size_t i = 0; i < vals.size(); ++i) {
      const bool in = is_min ? vals[i] <= ext + band : vals[i] >= ext - band;
      if (in) out.push_back(static_cast<int>(i));
    }
    return out;
  }

  // One-sided directional derivative at x along v.
  double dd(std::span<const double> x, std::span<const double> v) const {
    return dd_over(active(x), x, v);
  }

  double dd_over(const std::vector<int>& act, std::span<const double> x, std::span<const double> v) const {
    Vec g(x.size());
    double best = is_min ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    for (int i : act) {
      piece_gradient(i, x, g);
      const double s = dot(g, v);
      best = is_min ? std::min(best, s) : std::max(best, s);
    }
    return best;
  }

 private:
  std::vector<Expr> pieces_;
};

using ConvexMaxFn = PieceFn<ConvexTag>;
using ConcaveMinFn = PieceFn<ConcaveTag>;
using DiffMaxFn = PieceFn<DiffTag>;

struct InnerActive {
  std::vector<int> cvx;
  std::vector<int> cve;
  std::vector<int> diff;
};

// p = cvx + cve + diff, absent parts contributing zero.
struct InnerFunction {
  std::optional<ConvexMaxFn> cvx;
  std::optional<ConcaveMinFn> cve;
  std::optional<DiffMaxFn> diff;

  bool empty() const { return !cvx && !cve && !diff; }

  std::size_t arity() const {
    std::size_t a = 0;
    if (cvx) a = std::max(a, cvx->arity());
    if (cve) a = std::max(a, cve->arity());
    if (diff) a = std::max(a, diff->arity());
    return a;
  }

  double value(std::span<const double> x) const {
    double v = 0.0;
    if (cvx) v += cvx->value(x);
    if (cve) v += cve->value(x);
    if (diff) v += diff->value(x);
    return v;
  }

  InnerActive active(std::span<const double> x, double delta = 0.0) const {
    InnerActive a;
    if (cvx) a.cvx = cvx->active(x, delta);
    if (cve) a.cve = cve->active(x, delta);
    if (diff) a.diff = diff->active(x, delta);
    return a;
  }

  double dd(std::span<const double> x, std::span<const double> v, const InnerActive& act) const {
    double s = 0.0;
    if (cvx) s += cvx->dd_over(act.cvx, x, v);
    if (cve) s += cve->dd_over(act.cve, x, v);
    if (diff) s += diff->dd_over(act.diff, x, v);
    return s;
  }

  double dd(std::span<const double> x, std::span<const double> v) const { return dd(x, v, active(x)); }
};

inline double inner_dd(const InnerFunction& p, std::span<const double> x, std::span<const double> v,
                       const InnerActive& active) {
  return p.dd(x, v, active);
}

// ---------------------------------------------------------------------------
// Outer functions

// Differentiable outer function of y in R^K.
struct TypeI {
  Expr phi;
};

// phi = psi_up + psi_down on R, psi_up convex nondecreasing and psi_down
// convex nonincreasing. Either part may be absent (zero).
struct TypeIIUnivariate {
  std::optional<ConvexMaxFn> psi_up;
  std::optional<ConvexMaxFn> psi_down;
};

struct TypeIISeparable {
  std::vector<TypeIIUnivariate> terms;
};

enum class Tone { Isotone, Antitone };

struct TypeIIMonotone {
  ConvexMaxFn phi;
  Tone tone = Tone::Isotone;
};

// Polyhedral outer: phi(y) = max_i generators[i] . y + offsets[i].
struct TypeIII {
  std::vector<Vec> generators;
  Vec offsets;
};

// Concave outer carried by its negation: phi = -neg_phi.
struct TypeIV {
  ConvexMaxFn neg_phi;
};

using OuterFunction = std::variant<TypeI, TypeIIUnivariate, TypeIISeparable, TypeIIMonotone, TypeIII, TypeIV>;

inline const char* outer_type_name(const OuterFunction& f) {
  static constexpr const char* names[] = {"I", "II_univariate", "II_separable", "II_monotone", "III", "IV"};
  return names[f.index()];
}

namespace detail {

inline double split_value(const TypeIIUnivariate& s, double t) {
  const double y[1] = {t};
  double v = 0.0;
  if (s.psi_up) v += s.psi_up->value(y);
  if (s.psi_down) v += s.psi_down->value(y);
  return v;
}

inline double split_dd(const TypeIIUnivariate& s, double t, double w) {
  const double y[1] = {t};
  const double d[1] = {w};
  double v = 0.0;
  if (s.psi_up) v += s.psi_up->dd(y, d);
  if (s.psi_down) v += s.psi_down->dd(y, d);
  return v;
}

inline std::vector<int> active_generators(const TypeIII& f, std::span<const double> y, double delta) {
  Vec vals(f.generators.size());
  for (std::size_t i = 0; i < vals.size(); ++i) vals[i] = dot(f.generators[i], y) + f.offsets[i];
  const double m = *std::max_element(vals.begin(), vals.end());
  std::vector<int> out;
  for (std::size_t i = 0; i < vals.size(); ++i)
    if (vals[i] >= m - delta - activity_tol(m)) out.push_back(static_cast<int>(i));
  return out;
}

}  // namespace detail

inline double outer_value(const OuterFunction& f, std::span<const double> y) {
  return std::visit(
      [&](const auto& o) -> double {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, TypeI>) {
          return o.phi.value(y);
        } else if constexpr (std::is_same_v<T, TypeIIUnivariate>) {
          return detail::split_value(o, y[0]);
        } else if constexpr (std::is_same_v<T, TypeIISeparable>) {
          double s = 0.0;
          for (std::size_t k = 0; k < o.terms.size(); ++k) s += detail::split_value(o.terms[k], y[k]);
          return s;
        } else if constexpr (std::is_same_v<T, TypeIIMonotone>) {
          return o.phi.value(y);
        } else if constexpr (std::is_same_v<T, TypeIII>) {
          double m = -std::numeric_limits<double>::infinity();
          for (std::size_t i = 0; i < o.generators.size(); ++i)
            m = std::max(m, dot(o.generators[i], y) + o.offsets[i]);
          return m;
        } else {
          return -o.neg_phi.value(y);
        }
      },
      f);
}

// phi'(y; w).
inline double outer_dd(const OuterFunction& f, std::span<const double> y, std::span<const double> w) {
  return std::visit(
      [&](const auto& o) -> double {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, TypeI>) {
          Vec g(y.size());
          o.phi.gradient(y, g);
          return dot(g, w);
        } else if constexpr (std::is_same_v<T, TypeIIUnivariate>) {
          return detail::split_dd(o, y[0], w[0]);
        } else if constexpr (std::is_same_v<T, TypeIISeparable>) {
          double s = 0.0;
          for (std::size_t k = 0; k < o.terms.size(); ++k) s += detail::split_dd(o.terms[k], y[k], w[k]);
          return s;
        } else if constexpr (std::is_same_v<T, TypeIIMonotone>) {
          return o.phi.dd(y, w);
        } else if constexpr (std::is_same_v<T, TypeIII>) {
          double m = -std::numeric_limits<double>::infinity();
          for (int i : detail::active_generators(o, y, 0.0)) m = std::max(m, dot(o.generators[static_cast<std::size_t>(i)], w));
          return m;
        } else {
          return -o.neg_phi.dd(y, w);
        }
      },
      f);
}

// Pieces of the outer function that carry a choice: active generators (III),
// active pieces of neg_phi (IV) or of the monotone phi (II_monotone).
inline std::vector<int> outer_active(const OuterFunction& f, std::span<const double> y, double delta = 0.0) {
  if (const auto* o = std::get_if<TypeIII>(&f)) return detail::active_generators(*o, y, delta);
  if (const auto* o = std::get_if<TypeIV>(&f)) return o->neg_phi.active(y, delta);
  if (const auto* o = std::get_if<TypeIIMonotone>(&f)) return o->phi.active(y, delta);
  return {};
}

// ---------------------------------------------------------------------------

struct Composite {
  std::string label;
  OuterFunction outer;
  std::vector<InnerFunction> inner;

  std::size_t components() const { return inner.size(); }

  Vec inner_values(std::span<const double> x) const {
    Vec y(inner.size());
    for (std::size_t k = 0; k < inner.size(); ++k) y[k] = inner[k].value(x);
    return y;
  }

  double value(std::span<const double> x) const { return outer_value(outer, inner_values(x)); }

  // Exact one-sided directional derivative of theta at x along v.
  double dd(std::span<const double> x, std::span<const double> v) const {
    const Vec y = inner_values(x);
    Vec w(inner.size());
    for (std::size_t k = 0; k < inner.size(); ++k) w[k] = inner[k].dd(x, v);
    return outer_dd(outer, y, w);
  }
};

inline double theta_dd(const Composite& c, std::span<const double> x, std::span<const double> v) {
  return c.dd(x, v);
}

class Problem {
 public:
  Problem(std::size_t dimension, FeasibleSet set, std::vector<Composite> composites, std::string name = {})
      : n_(dimension), set_(std::move(set)), composites_(std::move(composites)), name_(std::move(name)) {
    check_structure();
  }

  std::size_t dimension() const { return n_; }
  const FeasibleSet& feasible_set() const { return set_; }
  const std::vector<Composite>& composites() const { return composites_; }
  const Composite& composite(std::size_t j) const { return composites_[j]; }
  std::size_t size() const { return composites_.size(); }
  const std::string& name() const { return name_; }

 private:
  void check_structure() const {
    auto bad = [](const std::string& msg) { throw Error(ErrorCode::InvalidParameter, msg); };
    if (n_ == 0) bad("dimension must be positive");
    if (set_.dimension() != n_) bad("feasible set dimension differs from problem dimension");
    if (composites_.empty()) bad("problem needs at least one composite");
    for (const auto& c : composites_) {
      const std::size_t K = c.inner.size();
      if (K == 0) bad("composite '" + c.label + "' has no inner functions");
      for (const auto& p : c.inner) {
        if (p.empty()) bad("composite '" + c.label + "' has an inner function with no parts");
        if (p.arity() > n_) bad("composite '" + c.label + "' uses a variable beyond the dimension");
      }
      std::visit(
          [&](const auto& o) {
            using T = std::decay_t<decltype(o)>;
            if constexpr (std::is_same_v<T, TypeI>) {
              if (o.phi.arity() > K) bad("outer of '" + c.label + "' uses y beyond K");
            } else if constexpr (std::is_same_v<T, TypeIIUnivariate>) {
              if (K != 1) bad("II_univariate outer of '" + c.label + "' needs exactly one inner function");
              if (!o.psi_up && !o.psi_down) bad("II_univariate outer of '" + c.label + "' is empty");
              if ((o.psi_up && o.psi_up->arity() > 1) || (o.psi_down && o.psi_down->arity() > 1))
                bad("II_univariate pieces must use y0 only");
            } else if constexpr (std::is_same_v<T, TypeIISeparable>) {
              if (o.terms.size() != K) bad("II_separable outer of '" + c.label + "' needs one term per inner function");
              for (const auto& t : o.terms)
                if ((t.psi_up && t.psi_up->arity() > 1) || (t.psi_down && t.psi_down->arity() > 1))
                  bad("II_separable pieces must use y0 only");
            } else if constexpr (std::is_same_v<T, TypeIIMonotone>) {
              if (o.phi.arity() > K) bad("outer of '" + c.label + "' uses y beyond K");
            } else if constexpr (std::is_same_v<T, TypeIII>) {
              if (o.generators.empty() || o.generators.size() != o.offsets.size())
                bad("III outer of '" + c.label + "' needs matching generators and offsets");
              for (const auto& g : o.generators)
                if (g.size() != K) bad("III generator of '" + c.label + "' has the wrong length");
            } else {
              if (o.neg_phi.arity() > K) bad("outer of '" + c.label + "' uses y beyond K");
            }
          },
          c.outer);
    }
  }

  std::size_t n_;
  FeasibleSet set_;
  std::vector<Composite> composites_;
  std::string name_;
};

// ---------------------------------------------------------------------------
// Evaluation and active sets

struct CompositeActive {
  Vec y;                          // P(x)
  std::vector<InnerActive> inner;  // per inner component
  std::vector<int> outer;          // see outer_active
  std::vector<int> sign;           // Type I: +1 when dphi/dy_k >= 0, else -1
};

struct ActiveSets {
  std::vector<int> mtheta;
  std::vector<int> mtheta_eps;
  std::vector<int> boundary;  // indices within tolerance of the cutoff max - eps
  std::vector<CompositeActive> composites;
};

struct ThetaEval {
  double value = 0.0;
  Vec theta;
  ActiveSets active;
};

inline Vec theta_values(const Problem& prob, std::span<const double> x) {
  Vec th(prob.size());
  for (std::size_t j = 0; j < prob.size(); ++j) {
    th[j] = prob.composite(j).value(x);
    if (!std::isfinite(th[j]))
      throw Error(ErrorCode::NonFiniteValue, "composite '" + prob.composite(j).label + "' is not finite");
  }
  return th;
}

inline double theta_max(const Problem& prob, std::span<const double> x) {
  const Vec th = theta_values(prob, x);
  return *std::max_element(th.begin(), th.end());
}

// Composites j with theta_j >= max - eps (up to the activity tolerance).
inline std::vector<int> eps_active(std::span<const double> theta, double eps) {
  const double m = *std::max_element(theta.begin(), theta.end());
  std::vector<int> out;
  for (std::size_t j = 0; j < theta.size(); ++j)
    if (theta[j] >= m - eps - activity_tol(m)) out.push_back(static_cast<int>(j));
  return out;
}

inline CompositeActive composite_active(const Composite& c, std::span<const double> x, double delta) {
  CompositeActive ca;
  ca.y = c.inner_values(x);
  for (const auto& p : c.inner) ca.inner.push_back(p.active(x, delta));
  ca.outer = outer_active(c.outer, ca.y, delta);
  if (const auto* t = std::get_if<TypeI>(&c.outer)) {
    Vec g(ca.y.size());
    t->phi.gradient(ca.y, g);
    for (double gk : g) ca.sign.push_back(gk >= 0.0 ? 1 : -1);
  }
  return ca;
}

inline ThetaEval eval_theta_max(const Problem& prob, std::span<const double> x, double eps = 0.0, double delta = 0.0) {
  ThetaEval ev;
  ev.theta = theta_values(prob, x);
  ev.value = *std::max_element(ev.theta.begin(), ev.theta.end());
  ev.active.mtheta = eps_active(ev.theta, 0.0);
  ev.active.mtheta_eps = eps_active(ev.theta, eps);
  const double cut = ev.value - eps;
  for (std::size_t j = 0; j < ev.theta.size(); ++j)
    if (eps > 0.0 && std::abs(ev.theta[j] - cut) <= 2.0 * activity_tol(ev.value))
      ev.active.boundary.push_back(static_cast<int>(j));
  for (const auto& c : prob.composites()) ev.active.composites.push_back(composite_active(c, x, delta));
  return ev;
}

// Theta_max'(x; v) = max over j in M_Theta(x) of theta_j'(x; v).
inline double theta_max_dd(const Problem& prob, std::span<const double> x, std::span<const double> v) {
  const Vec th = theta_values(prob, x);
  double best = -std::numeric_limits<double>::infinity();
  for (int j : eps_active(th, 0.0)) best = std::max(best, prob.composite(static_cast<std::size_t>(j)).dd(x, v));
  return best;
}

inline Vec project(const FeasibleSet& set, std::span<const double> z) { return set.project(z); }

// ---------------------------------------------------------------------------
// Domain validation

inline void for_each_inner_expr(const Composite& c, const std::function<void(const Expr&)>& fn) {
  for (const auto& p : c.inner) {
    if (p.cvx)
      for (const auto& e : p.cvx->pieces()) fn(e);
    if (p.cve)
      for (const auto& e : p.cve->pieces()) fn(e);
    if (p.diff)
      for (const auto& e : p.diff->pieces()) fn(e);
  }
}

inline void for_each_outer_expr(const Composite& c, const std::function<void(const Expr&)>& fn) {
  auto split = [&](const TypeIIUnivariate& s) {
    if (s.psi_up)
      for (const auto& e : s.psi_up->pieces()) fn(e);
    if (s.psi_down)
      for (const auto& e : s.psi_down->pieces()) fn(e);
  };
  std::visit(
      [&](const auto& o) {
        using T = std::decay_t<decltype(o)>;
        if constexpr (std::is_same_v<T, TypeI>) {
          fn(o.phi);
        } else if constexpr (std::is_same_v<T, TypeIIUnivariate>) {
          split(o);
        } else if constexpr (std::is_same_v<T, TypeIISeparable>) {
          for (const auto& t : o.terms) split(t);
        } else if constexpr (std::is_same_v<T, TypeIIMonotone>) {
          for (const auto& e : o.phi.pieces()) fn(e);
        } else if constexpr (std::is_same_v<T, TypeIV>) {
          for (const auto& e : o.neg_phi.pieces()) fn(e);
        }
      },
      c.outer);
}

// Samples X and checks that every division keeps one strict sign (the sign
// seen at the center of X) and that every composite is finite.
inline void validate_domain(const Problem& prob, std::size_t samples = 1000, std::uint64_t seed = 0x5eed) {
  std::mt19937_64 rng(seed);
  const FeasibleSet& X = prob.feasible_set();
  std::vector<Vec> points{X.center()};
  for (std::size_t s = 0; s < samples; ++s) points.push_back(X.sample(rng));

  for (const auto& c : prob.composites()) {
    std::vector<const Expr*> inner_exprs, outer_exprs;
    for_each_inner_expr(c, [&](const Expr& e) {
      if (e.has_division()) inner_exprs.push_back(&e);
    });
    for_each_outer_expr(c, [&](const Expr& e) {
      if (e.has_division()) outer_exprs.push_back(&e);
    });
    std::vector<std::vector<int>> inner_sign(inner_exprs.size()), outer_sign(outer_exprs.size());
    auto check = [&](const Expr& e, std::vector<int>& sign, std::span<const double> at, const char* where) {
      const Vec den = e.denominators(at);
      if (sign.empty())
        for (double d : den) sign.push_back(d > 0 ? 1 : (d < 0 ? -1 : 0));
      for (std::size_t i = 0; i < den.size(); ++i) {
        const int s = den[i] > 0 ? 1 : (den[i] < 0 ? -1 : 0);
        if (s == 0 || s != sign[i])
          throw Error(ErrorCode::DenominatorSignViolation,
                      std::string(where) + " expression '" + e.source() + "' of composite '" + c.label +
                          "' has a denominator that is zero or changes sign on the domain");
      }
    };
    for (const Vec& x : points) {
      for (std::size_t i = 0; i < inner_exprs.size(); ++i) check(*inner_exprs[i], inner_sign[i], x, "inner");
      const Vec y = c.inner_values(x);
      for (std::size_t i = 0; i < outer_exprs.size(); ++i) check(*outer_exprs[i], outer_sign[i], y, "outer");
      const double th = outer_value(c.outer, y);
      if (!std::isfinite(th))
        throw Error(ErrorCode::NonFiniteValue, "composite '" + c.label + "' is not finite on the domain");
    }
  }
}

}  // namespace qdc
