#pragma once

// Convex surrogates of the composites at a reference point xbar.
//
// For each inner component p = cvx + cve + diff and a selection (a, b, l) of
// active pieces, two brackets vanish at xbar:
//   upper(x) = cvx(x) - cvx(xbar) - b.(x - xbar) + max_{l' active} grad p_l'(xbar).(x - xbar)
//   lower(x) = a.(x - xbar) + cve(x) - cve(xbar) + grad p_l(xbar).(x - xbar)
// with a the gradient of a chosen active convex piece and -b that of a chosen
// active concave piece. upper is convex and lower is concave. A weight w puts
// the component on the upper bracket when w >= 0 and on the lower one
// otherwise, so w * bracket is convex either way.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include "qdc/model.hpp"

namespace qdc {

struct InnerChoice {
  int cvx = -1;
  int cve = -1;
  int diff = -1;
};

// One member of the parameter family for a single composite.
struct ParamTuple {
  std::vector<InnerChoice> inner;
  int outer = -1;  // Type IV: chosen active piece of neg_phi
};

// One tuple per composite of the problem.
using TupleAssignment = std::vector<ParamTuple>;

inline std::uint64_t saturating_mul(std::uint64_t a, std::uint64_t b) {
  if (a != 0 && b > std::numeric_limits<std::uint64_t>::max() / a) return std::numeric_limits<std::uint64_t>::max();
  return a * b;
}

// Active-piece choices of one composite; the family is their Cartesian
// product, enumerated in lexicographic order with the first slot most
// significant.
struct CompositeFamily {
  std::vector<InnerActive> inner;
  std::vector<int> outer;  // Type IV only

  std::vector<std::size_t> radices() const {
    std::vector<std::size_t> r;
    for (const auto& a : inner) {
      r.push_back(std::max<std::size_t>(1, a.cvx.size()));
      r.push_back(std::max<std::size_t>(1, a.cve.size()));
      r.push_back(std::max<std::size_t>(1, a.diff.size()));
    }
    r.push_back(std::max<std::size_t>(1, outer.size()));
    return r;
  }

  std::uint64_t size() const {
    std::uint64_t s = 1;
    for (std::size_t r : radices()) s = saturating_mul(s, r);
    return s;
  }

  ParamTuple at(std::uint64_t id) const {
    const auto r = radices();
    std::vector<std::size_t> digit(r.size());
    for (std::size_t i = r.size(); i-- > 0;) {
      digit[i] = static_cast<std::size_t>(id % r[i]);
      id /= r[i];
    }
    auto pick = [](const std::vector<int>& list, std::size_t d) { return list.empty() ? -1 : list[d]; };
    ParamTuple t;
    for (std::size_t k = 0; k < inner.size(); ++k)
      t.inner.push_back({pick(inner[k].cvx, digit[3 * k]), pick(inner[k].cve, digit[3 * k + 1]),
                         pick(inner[k].diff, digit[3 * k + 2])});
    t.outer = pick(outer, digit.back());
    return t;
  }
};

struct XiFamily {
  std::vector<CompositeFamily> composites;

  // Size of the joint family over the listed composites.
  std::uint64_t size(std::span<const int> members) const {
    std::uint64_t s = 1;
    for (int j : members) s = saturating_mul(s, composites[static_cast<std::size_t>(j)].size());
    return s;
  }

  // Joint tuple number id over members (first member most significant);
  // composites outside members get their first tuple.
  TupleAssignment at(std::span<const int> members, std::uint64_t id) const {
    TupleAssignment out;
    for (const auto& f : composites) out.push_back(f.at(0));
    for (std::size_t m = members.size(); m-- > 0;) {
      const auto& f = composites[static_cast<std::size_t>(members[m])];
      const std::uint64_t s = f.size();
      out[static_cast<std::size_t>(members[m])] = f.at(id % s);
      id /= s;
    }
    return out;
  }

  TupleAssignment first() const { return at({}, 0); }
};

inline constexpr std::uint64_t kDefaultFamilyCap = 10'000;

// delta = 0 gives the pieces active within the tie tolerance.
inline XiFamily build_xi_family(const Problem& prob, std::span<const double> xbar, double delta = 0.0) {
  XiFamily fam;
  for (const auto& c : prob.composites()) {
    CompositeFamily cf;
    const Vec y = c.inner_values(xbar);
    for (const auto& p : c.inner) cf.inner.push_back(p.active(xbar, delta));
    if (std::holds_alternative<TypeIV>(c.outer)) cf.outer = outer_active(c.outer, y, delta);
    fam.composites.push_back(std::move(cf));
  }
  return fam;
}

struct SurrogateOptions {
  double delta = 0.0;            // activity band for the diff max in the upper bracket
  bool include_offsets = true;   // false drops theta_j(xbar), leaving models that vanish at xbar
};

namespace detail {

struct Bracket {
  bool has_cvx = false;
  bool has_cve = false;
  bool has_diff = false;
  double cvx_bar = 0.0;
  double cve_bar = 0.0;
  Vec a;                    // gradient of the chosen convex piece
  Vec b;                    // minus the gradient of the chosen concave piece
  Vec g_sel;                // gradient of the chosen diff piece
  std::vector<Vec> g_all;   // gradients of the delta-active diff pieces
  std::vector<int> cvx_act;  // tie-active pieces at xbar, for directional derivatives
  std::vector<int> cve_act;
};

struct Part {
  int composite = -1;
  double theta_bar = 0.0;
  Vec ybar;
  std::vector<Bracket> br;
  Vec weights;            // Types I and IV
  std::vector<int> gens;  // Type III
};

inline int first_or(int choice, const std::vector<int>& fallback) {
  return choice >= 0 ? choice : (fallback.empty() ? 0 : fallback.front());
}

inline Bracket make_bracket(const InnerFunction& p, std::span<const double> xbar, const InnerChoice& ch, double delta) {
  const std::size_t n = xbar.size();
  Bracket b;
  b.a.assign(n, 0.0);
  b.b.assign(n, 0.0);
  b.g_sel.assign(n, 0.0);
  const InnerActive tie = p.active(xbar, 0.0);
  if (p.cvx) {
    b.has_cvx = true;
    b.cvx_bar = p.cvx->value(xbar);
    b.cvx_act = tie.cvx;
    p.cvx->piece_gradient(first_or(ch.cvx, tie.cvx), xbar, b.a);
  }
  if (p.cve) {
    b.has_cve = true;
    b.cve_bar = p.cve->value(xbar);
    b.cve_act = tie.cve;
    p.cve->piece_gradient(first_or(ch.cve, tie.cve), xbar, b.b);
    for (double& v : b.b) v = -v;
  }
  if (p.diff) {
    b.has_diff = true;
    p.diff->piece_gradient(first_or(ch.diff, tie.diff), xbar, b.g_sel);
    for (int l : p.diff->active(xbar, delta)) {
      Vec g(n);
      p.diff->piece_gradient(l, xbar, g);
      b.g_all.push_back(std::move(g));
    }
  }
  return b;
}

// Bracket values at x; grad (if nonempty) receives a subgradient of upper or a
// supergradient of lower.
inline double upper_value(const InnerFunction& p, const Bracket& b, std::span<const double> x,
                          std::span<const double> xbar, std::span<double> grad, Vec& tmp) {
  const bool want = !grad.empty();
  if (want) std::fill(grad.begin(), grad.end(), 0.0);
  double v = 0.0;
  if (b.has_cvx) {
    if (want) {
      v += p.cvx->value_gradient(x, tmp) - b.cvx_bar;
      add_scaled(grad, 1.0, tmp);
    } else {
      v += p.cvx->value(x) - b.cvx_bar;
    }
  }
  if (b.has_cve) {
    v -= dot_diff(x, xbar, b.b);
    if (want) add_scaled(grad, -1.0, b.b);
  }
  if (b.has_diff) {
    double best = -std::numeric_limits<double>::infinity();
    std::size_t arg = 0;
    for (std::size_t i = 0; i < b.g_all.size(); ++i) {
      const double s = dot_diff(x, xbar, b.g_all[i]);
      if (s > best) {
        best = s;
        arg = i;
      }
    }
    v += best;
    if (want) add_scaled(grad, 1.0, b.g_all[arg]);
  }
  return v;
}

inline double lower_value(const InnerFunction& p, const Bracket& b, std::span<const double> x,
                          std::span<const double> xbar, std::span<double> grad, Vec& tmp) {
  const bool want = !grad.empty();
  if (want) std::fill(grad.begin(), grad.end(), 0.0);
  double v = 0.0;
  if (b.has_cvx) {
    v += dot_diff(x, xbar, b.a);
    if (want) add_scaled(grad, 1.0, b.a);
  }
  if (b.has_cve) {
    if (want) {
      v += p.cve->value_gradient(x, tmp) - b.cve_bar;
      add_scaled(grad, 1.0, tmp);
    } else {
      v += p.cve->value(x) - b.cve_bar;
    }
  }
  if (b.has_diff) {
    v += dot_diff(x, xbar, b.g_sel);
    if (want) add_scaled(grad, 1.0, b.g_sel);
  }
  return v;
}

inline double upper_dd(const InnerFunction& p, const Bracket& b, std::span<const double> xbar,
                       std::span<const double> v) {
  double s = 0.0;
  if (b.has_cvx) s += p.cvx->dd_over(b.cvx_act, xbar, v);
  if (b.has_cve) s -= dot(b.b, v);
  if (b.has_diff) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& g : b.g_all) best = std::max(best, dot(g, v));
    s += best;
  }
  return s;
}

inline double lower_dd(const InnerFunction& p, const Bracket& b, std::span<const double> xbar,
                       std::span<const double> v) {
  double s = 0.0;
  if (b.has_cvx) s += dot(b.a, v);
  if (b.has_cve) s += p.cve->dd_over(b.cve_act, xbar, v);
  if (b.has_diff) s += dot(b.g_sel, v);
  return s;
}

inline Part make_part(const Problem& prob, int j, std::span<const double> xbar, const ParamTuple& tuple,
                      double delta) {
  const Composite& c = prob.composite(static_cast<std::size_t>(j));
  Part part;
  part.composite = j;
  part.ybar = c.inner_values(xbar);
  part.theta_bar = outer_value(c.outer, part.ybar);
  const std::size_t K = c.inner.size();
  for (std::size_t k = 0; k < K; ++k) {
    const InnerChoice ch = k < tuple.inner.size() ? tuple.inner[k] : InnerChoice{};
    part.br.push_back(make_bracket(c.inner[k], xbar, ch, delta));
  }
  if (const auto* t1 = std::get_if<TypeI>(&c.outer)) {
    part.weights.assign(K, 0.0);
    t1->phi.gradient(part.ybar, part.weights);
  } else if (const auto* t4 = std::get_if<TypeIV>(&c.outer)) {
    part.weights.assign(K, 0.0);
    const int piece = first_or(tuple.outer, t4->neg_phi.active(part.ybar, 0.0));
    t4->neg_phi.piece_gradient(piece, part.ybar, part.weights);
    for (double& w : part.weights) w = -w;
  } else if (const auto* t3 = std::get_if<TypeIII>(&c.outer)) {
    part.gens = detail::active_generators(*t3, part.ybar, delta);
  }
  return part;
}

// Scalar convex piecewise function of one variable: value and slope of the active piece.
inline double scalar_value_slope(const ConvexMaxFn& f, double z, double& slope) {
  const double in[1] = {z};
  double g[1] = {0.0};
  const double v = f.value_gradient(in, g);
  slope = g[0];
  return v;
}

inline double split_dd_at(const TypeIIUnivariate& s, double ybar, double up_dir, double down_dir) {
  const double y[1] = {ybar};
  double out = 0.0;
  if (s.psi_up) {
    const double d[1] = {up_dir};
    out += s.psi_up->dd(y, d);
  }
  if (s.psi_down) {
    const double d[1] = {down_dir};
    out += s.psi_down->dd(y, d);
  }
  return out;
}

}  // namespace detail

// The family of convex models {shat_j : j in M_Theta^eps(xbar)} for one tuple
// assignment. Holds a reference to the problem, which must outlive it.
class SurrogateModel {
 public:
  SurrogateModel(const Problem& prob, Vec xbar, double eps, std::vector<int> index_set,
                 std::vector<detail::Part> parts, TupleAssignment tuples, SurrogateOptions opts)
      : prob_(&prob),
        xbar_(std::move(xbar)),
        eps_(eps),
        index_set_(std::move(index_set)),
        parts_(std::move(parts)),
        tuples_(std::move(tuples)),
        opts_(opts) {}

  const Problem& problem() const { return *prob_; }
  const Vec& xbar() const { return xbar_; }
  double eps() const { return eps_; }
  const std::vector<int>& index_set() const { return index_set_; }
  const TupleAssignment& tuples() const { return tuples_; }
  const SurrogateOptions& options() const { return opts_; }
  std::size_t size() const { return parts_.size(); }
  int composite_of(std::size_t p) const { return parts_[p].composite; }
  double theta_bar(std::size_t p) const { return parts_[p].theta_bar; }

  // Value of part p at x, with a subgradient written to grad when nonempty.
  double part_value(std::size_t p, std::span<const double> x, std::span<double> grad = {}) const {
    return eval_part(parts_[p], x, grad);
  }

  // Directional derivative of part p at xbar along v.
  double part_dd(std::size_t p, std::span<const double> v) const { return dd_part(parts_[p], v); }

  double value(std::span<const double> x) const {
    double m = -std::numeric_limits<double>::infinity();
    for (const auto& part : parts_) m = std::max(m, eval_part(part, x, {}));
    return m;
  }

  // max_j shat_j(x) with a subgradient of the first maximizing part.
  double value_subgradient(std::span<const double> x, std::span<double> grad) const {
    double m = -std::numeric_limits<double>::infinity();
    Vec g(x.size());
    for (const auto& part : parts_) {
      const double v = eval_part(part, x, g);
      if (v > m) {
        m = v;
        std::copy(g.begin(), g.end(), grad.begin());
      }
    }
    return m;
  }

  // Directional derivative at xbar of the max model: parts touching the max at xbar.
  double max_dd(std::span<const double> v) const {
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < parts_.size(); ++p) top = std::max(top, offset(parts_[p]));
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < parts_.size(); ++p)
      if (offset(parts_[p]) >= top - activity_tol(top)) best = std::max(best, dd_part(parts_[p], v));
    return best;
  }

  // Evaluates a part built outside the model (used for family sweeps).
  double eval_part(const detail::Part& part, std::span<const double> x, std::span<double> grad) const {
    return evaluate(*prob_, xbar_, opts_, part, x, grad);
  }

  double dd_part(const detail::Part& part, std::span<const double> v) const {
    return directional(*prob_, xbar_, part, v);
  }

  static double evaluate(const Problem& prob, std::span<const double> xbar, const SurrogateOptions& opts,
                         const detail::Part& part, std::span<const double> x, std::span<double> grad);

  static double directional(const Problem& prob, std::span<const double> xbar, const detail::Part& part,
                            std::span<const double> v);

 private:
  double offset(const detail::Part& part) const { return opts_.include_offsets ? part.theta_bar : 0.0; }

  const Problem* prob_;
  Vec xbar_;
  double eps_;
  std::vector<int> index_set_;
  std::vector<detail::Part> parts_;
  TupleAssignment tuples_;
  SurrogateOptions opts_;
};

inline double SurrogateModel::evaluate(const Problem& prob, std::span<const double> xbar, const SurrogateOptions& opts,
                                       const detail::Part& part, std::span<const double> x, std::span<double> grad) {
  using namespace detail;
  const Composite& c = prob.composite(static_cast<std::size_t>(part.composite));
  const std::size_t n = x.size();
  const std::size_t K = c.inner.size();
  const bool want = !grad.empty();
  if (want) std::fill(grad.begin(), grad.end(), 0.0);
  Vec tmp(n), g(n);
  std::span<double> gs = want ? std::span<double>(g) : std::span<double>();
  double val = 0.0;

  auto weighted = [&](std::span<const double> w) {
    double s = part.theta_bar;
    for (std::size_t k = 0; k < K; ++k) {
      if (w[k] == 0.0) continue;
      const double b = w[k] >= 0.0 ? upper_value(c.inner[k], part.br[k], x, xbar, gs, tmp)
                                   : lower_value(c.inner[k], part.br[k], x, xbar, gs, tmp);
      s += w[k] * b;
      if (want) add_scaled(grad, w[k], g);
    }
    return s;
  };

  if (std::holds_alternative<TypeI>(c.outer) || std::holds_alternative<TypeIV>(c.outer)) {
    val = weighted(part.weights);
  } else if (const auto* t3 = std::get_if<TypeIII>(&c.outer)) {
    Vec up(K), lo(K);
    std::vector<Vec> gup(want ? K : 0, Vec(n)), glo(want ? K : 0, Vec(n));
    for (std::size_t k = 0; k < K; ++k) {
      up[k] = upper_value(c.inner[k], part.br[k], x, xbar, want ? std::span<double>(gup[k]) : std::span<double>(), tmp);
      lo[k] = lower_value(c.inner[k], part.br[k], x, xbar, want ? std::span<double>(glo[k]) : std::span<double>(), tmp);
    }
    double best = -std::numeric_limits<double>::infinity();
    int arg = -1;
    for (int i : part.gens) {
      const Vec& cg = t3->generators[static_cast<std::size_t>(i)];
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += cg[k] * (cg[k] >= 0.0 ? up[k] : lo[k]);
      if (s > best) {
        best = s;
        arg = i;
      }
    }
    val = part.theta_bar + best;
    if (want) {
      const Vec& cg = t3->generators[static_cast<std::size_t>(arg)];
      for (std::size_t k = 0; k < K; ++k) add_scaled(grad, cg[k], cg[k] >= 0.0 ? gup[k] : glo[k]);
    }
  } else if (const auto* m = std::get_if<TypeIIMonotone>(&c.outer)) {
    const bool iso = m->tone == Tone::Isotone;
    Vec z(K);
    std::vector<Vec> gk(want ? K : 0, Vec(n));
    for (std::size_t k = 0; k < K; ++k) {
      std::span<double> gspan = want ? std::span<double>(gk[k]) : std::span<double>();
      const double b = iso ? upper_value(c.inner[k], part.br[k], x, xbar, gspan, tmp)
                           : lower_value(c.inner[k], part.br[k], x, xbar, gspan, tmp);
      z[k] = part.ybar[k] + b;
    }
    if (want) {
      Vec gphi(K);
      val = m->phi.value_gradient(z, gphi);
      for (std::size_t k = 0; k < K; ++k) add_scaled(grad, gphi[k], gk[k]);
    } else {
      val = m->phi.value(z);
    }
  } else {
    // Types II_univariate and II_separable share the per-coordinate split.
    const auto* uni = std::get_if<TypeIIUnivariate>(&c.outer);
    const auto* sep = std::get_if<TypeIISeparable>(&c.outer);
    for (std::size_t k = 0; k < K; ++k) {
      const TypeIIUnivariate& s = uni ? *uni : sep->terms[k];
      if (s.psi_up) {
        double slope = 0.0;
        const double b = upper_value(c.inner[k], part.br[k], x, xbar, gs, tmp);
        val += scalar_value_slope(*s.psi_up, part.ybar[k] + b, slope);
        if (want) add_scaled(grad, slope, g);
      }
      if (s.psi_down) {
        double slope = 0.0;
        const double b = lower_value(c.inner[k], part.br[k], x, xbar, gs, tmp);
        val += scalar_value_slope(*s.psi_down, part.ybar[k] + b, slope);
        if (want) add_scaled(grad, slope, g);
      }
    }
  }
  return opts.include_offsets ? val : val - part.theta_bar;
}

inline double SurrogateModel::directional(const Problem& prob, std::span<const double> xbar, const detail::Part& part,
                                          std::span<const double> v) {
  using namespace detail;
  const Composite& c = prob.composite(static_cast<std::size_t>(part.composite));
  const std::size_t K = c.inner.size();
  if (std::holds_alternative<TypeI>(c.outer) || std::holds_alternative<TypeIV>(c.outer)) {
    double s = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double w = part.weights[k];
      if (w == 0.0) continue;
      s += w * (w >= 0.0 ? upper_dd(c.inner[k], part.br[k], xbar, v) : lower_dd(c.inner[k], part.br[k], xbar, v));
    }
    return s;
  }
  if (const auto* t3 = std::get_if<TypeIII>(&c.outer)) {
    Vec up(K), lo(K);
    for (std::size_t k = 0; k < K; ++k) {
      up[k] = upper_dd(c.inner[k], part.br[k], xbar, v);
      lo[k] = lower_dd(c.inner[k], part.br[k], xbar, v);
    }
    double best = -std::numeric_limits<double>::infinity();
    for (int i : part.gens) {
      const Vec& cg = t3->generators[static_cast<std::size_t>(i)];
      double s = 0.0;
      for (std::size_t k = 0; k < K; ++k) s += cg[k] * (cg[k] >= 0.0 ? up[k] : lo[k]);
      best = std::max(best, s);
    }
    return best;
  }
  if (const auto* m = std::get_if<TypeIIMonotone>(&c.outer)) {
    Vec w(K);
    for (std::size_t k = 0; k < K; ++k)
      w[k] = m->tone == Tone::Isotone ? upper_dd(c.inner[k], part.br[k], xbar, v)
                                      : lower_dd(c.inner[k], part.br[k], xbar, v);
    return m->phi.dd(part.ybar, w);
  }
  const auto* uni = std::get_if<TypeIIUnivariate>(&c.outer);
  const auto* sep = std::get_if<TypeIISeparable>(&c.outer);
  double s = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const TypeIIUnivariate& split = uni ? *uni : sep->terms[k];
    const double up = split.psi_up ? upper_dd(c.inner[k], part.br[k], xbar, v) : 0.0;
    const double lo = split.psi_down ? lower_dd(c.inner[k], part.br[k], xbar, v) : 0.0;
    s += split_dd_at(split, part.ybar[k], up, lo);
  }
  return s;
}

inline SurrogateModel build_surrogate(const Problem& prob, std::span<const double> xbar, const TupleAssignment& xi,
                                      double eps, SurrogateOptions opts = {}) {
  const Vec theta = theta_values(prob, xbar);
  std::vector<int> index_set = eps_active(theta, eps);
  std::vector<detail::Part> parts;
  for (int j : index_set) parts.push_back(detail::make_part(prob, j, xbar, xi[static_cast<std::size_t>(j)], opts.delta));
  return SurrogateModel(prob, Vec(xbar.begin(), xbar.end()), eps, std::move(index_set), std::move(parts), xi, opts);
}

// ---------------------------------------------------------------------------
// Property checks

struct TouchingReport {
  double max_deviation = 0.0;  // relative to max(1, |theta_j(xbar)|)
  bool pass = true;
};

inline TouchingReport check_touching(const SurrogateModel& model, double tol = 1e-10) {
  TouchingReport r;
  for (std::size_t p = 0; p < model.size(); ++p) {
    const double target = model.options().include_offsets ? model.theta_bar(p) : 0.0;
    const double dev = std::abs(model.part_value(p, model.xbar()) - target) / std::max(1.0, std::abs(model.theta_bar(p)));
    r.max_deviation = std::max(r.max_deviation, dev);
  }
  r.pass = r.max_deviation <= tol;
  return r;
}

struct DominanceReport {
  std::size_t checks = 0;
  std::size_t violations = 0;        // shat_j'(xbar; v) < theta_j'(xbar; v) - tol
  double worst_margin = std::numeric_limits<double>::infinity();  // min of shat' - theta'
  std::size_t closure_checks = 0;
  std::size_t closure_failures = 0;  // min over the family differs from theta'
  double worst_closure_gap = 0.0;
  std::size_t skipped_families = 0;  // families above the enumeration cap
  bool pass() const { return violations == 0 && closure_failures == 0; }
};

// Checks shat' >= theta' along each direction and that the minimum of shat'
// over the whole tie family at xbar equals theta'.
inline DominanceReport check_dominance(const SurrogateModel& model, const std::vector<Vec>& directions,
                                       double tol = 1e-8, std::uint64_t family_cap = 4096) {
  const Problem& prob = model.problem();
  const XiFamily fam = build_xi_family(prob, model.xbar(), 0.0);
  DominanceReport r;
  for (const Vec& v : directions) {
    for (std::size_t p = 0; p < model.size(); ++p) {
      const int j = model.composite_of(p);
      const double truth = prob.composite(static_cast<std::size_t>(j)).dd(model.xbar(), v);
      const double sur = model.part_dd(p, v);
      const double scale = std::max(1.0, std::abs(truth));
      ++r.checks;
      r.worst_margin = std::min(r.worst_margin, (sur - truth) / scale);
      if (sur < truth - tol * scale) ++r.violations;

      const CompositeFamily& cf = fam.composites[static_cast<std::size_t>(j)];
      if (cf.size() > family_cap) {
        ++r.skipped_families;
        continue;
      }
      double lowest = std::numeric_limits<double>::infinity();
      for (std::uint64_t id = 0; id < cf.size(); ++id) {
        const detail::Part part = detail::make_part(prob, j, model.xbar(), cf.at(id), 0.0);
        lowest = std::min(lowest, model.dd_part(part, v));
      }
      ++r.closure_checks;
      const double gap = std::abs(lowest - truth) / scale;
      r.worst_closure_gap = std::max(r.worst_closure_gap, gap);
      if (gap > tol) ++r.closure_failures;
    }
  }
  return r;
}

struct ConvexityReport {
  std::size_t pairs = 0;
  double worst_violation = 0.0;  // max of shat(mid) - (shat(u) + shat(v)) / 2
  bool pass = true;
};

// Midpoint convexity of every part on random feasible pairs.
template <class Rng>
ConvexityReport check_convexity(const SurrogateModel& model, std::size_t pairs, Rng& rng, double slack = 1e-9) {
  const FeasibleSet& X = model.problem().feasible_set();
  ConvexityReport r;
  for (std::size_t s = 0; s < pairs; ++s) {
    const Vec u = X.sample(rng);
    const Vec w = X.sample(rng);
    Vec mid(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) mid[i] = 0.5 * (u[i] + w[i]);
    for (std::size_t p = 0; p < model.size(); ++p) {
      const double fu = model.part_value(p, u);
      const double fw = model.part_value(p, w);
      const double viol = model.part_value(p, mid) - 0.5 * (fu + fw);
      const double scale = std::max({1.0, std::abs(fu), std::abs(fw)});
      r.worst_violation = std::max(r.worst_violation, viol / scale);
    }
    ++r.pairs;
  }
  r.pass = r.worst_violation <= slack;
  return r;
}

struct MajorizationReport {
  std::size_t checks = 0;
  std::size_t violations = 0;
};

// Where shat'(xbar; v) exceeds theta'(xbar; v) by more than gap, the model
// must lie strictly above theta at xbar + tau v for the given small steps.
inline MajorizationReport check_local_majorization(const SurrogateModel& model, const std::vector<Vec>& directions,
                                                   const std::vector<double>& taus, double gap = 1e-6) {
  const Problem& prob = model.problem();
  MajorizationReport r;
  for (const Vec& v : directions) {
    for (std::size_t p = 0; p < model.size(); ++p) {
      const Composite& c = prob.composite(static_cast<std::size_t>(model.composite_of(p)));
      if (model.part_dd(p, v) <= c.dd(model.xbar(), v) + gap) continue;
      for (double tau : taus) {
        const Vec x = axpy(model.xbar(), tau, v);
        if (!prob.feasible_set().contains(x)) continue;
        ++r.checks;
        const double offset = model.options().include_offsets ? 0.0 : model.theta_bar(p);
        if (!(model.part_value(p, x) + offset > c.value(x))) ++r.violations;
      }
    }
  }
  return r;
}

}  // namespace qdc
