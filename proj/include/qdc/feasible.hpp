#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <span>
#include <variant>
#include <vector>

#include "qdc/error.hpp"
#include "qdc/vec.hpp"

namespace qdc {

struct Box {
  Vec lower;
  Vec upper;
};

struct BallBox {
  Vec center;
  double radius = 0.0;
  Box box;
};

// Closed convex feasible region: a box, or a Euclidean ball intersected with a box.
class FeasibleSet {
 public:
  static FeasibleSet box(Vec lower, Vec upper) {
    validate_box(lower, upper);
    return FeasibleSet(Box{std::move(lower), std::move(upper)});
  }

  static FeasibleSet ball_box(Vec center, double radius, Vec lower, Vec upper) {
    validate_box(lower, upper);
    if (center.size() != lower.size())
      throw Error(ErrorCode::InvalidParameter, "ball center dimension differs from box");
    if (!(radius >= 0.0) || !std::isfinite(radius))
      throw Error(ErrorCode::InvalidParameter, "ball radius must be finite and nonnegative");
    BallBox bb{std::move(center), radius, Box{std::move(lower), std::move(upper)}};
    // The intersection is nonempty iff the box point nearest the center lies in the ball.
    Vec nearest = clamp(bb.center, bb.box);
    if (distance(nearest, bb.center) > radius * (1.0 + 1e-12) + 1e-15)
      throw Error(ErrorCode::EmptySet, "ball and box do not intersect");
    return FeasibleSet(std::move(bb));
  }

  std::size_t dimension() const {
    return std::visit([](const auto& s) { return lower_of(s).size(); }, set_);
  }

  bool is_box() const { return std::holds_alternative<Box>(set_); }
  const Box* as_box() const { return std::get_if<Box>(&set_); }
  const BallBox* as_ball_box() const { return std::get_if<BallBox>(&set_); }

  // Euclidean projection. For the ball-box case the KKT conditions give
  // x(lambda) = clamp((z + lambda c) / (1 + lambda)); lambda is found by bisection
  // on |x(lambda) - c| = r, which is nonincreasing in lambda.
  Vec project(std::span<const double> z) const {
    if (const Box* b = as_box()) return clamp(z, *b);
    const BallBox& bb = std::get<BallBox>(set_);
    Vec x = clamp(z, bb.box);
    if (distance(x, bb.center) <= bb.radius) return x;
    auto at = [&](double lambda) {
      Vec out(z.size());
      for (std::size_t i = 0; i < z.size(); ++i)
        out[i] = std::clamp((z[i] + lambda * bb.center[i]) / (1.0 + lambda), bb.box.lower[i],
                            bb.box.upper[i]);
      return out;
    };
    double lo = 0.0;
    double hi = 1.0;
    while (distance(at(hi), bb.center) > bb.radius && hi < 1e300) hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-15 * std::max(1.0, hi); ++it) {
      const double mid = 0.5 * (lo + hi);
      if (distance(at(mid), bb.center) > bb.radius)
        lo = mid;
      else
        hi = mid;
    }
    return at(hi);
  }

  bool contains(std::span<const double> x, double tol = 1e-12) const {
    const Box& b = bounding_box_ref();
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x[i] < b.lower[i] - tol || x[i] > b.upper[i] + tol) return false;
    if (const BallBox* bb = as_ball_box()) return distance(x, bb->center) <= bb->radius + tol;
    return true;
  }

  // Smallest box containing the set.
  Box bounding_box() const {
    if (const Box* b = as_box()) return *b;
    const BallBox& bb = std::get<BallBox>(set_);
    Box out = bb.box;
    for (std::size_t i = 0; i < out.lower.size(); ++i) {
      out.lower[i] = std::max(out.lower[i], bb.center[i] - bb.radius);
      out.upper[i] = std::min(out.upper[i], bb.center[i] + bb.radius);
    }
    return out;
  }

  double diameter() const {
    const Box b = bounding_box();
    double d = distance(b.lower, b.upper);
    if (const BallBox* bb = as_ball_box()) d = std::min(d, 2.0 * bb->radius);
    return d;
  }

  Vec center() const {
    const Box b = bounding_box();
    Vec c(b.lower.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.5 * (b.lower[i] + b.upper[i]);
    return project(c);
  }

  // Uniform sample by rejection from the bounding box; falls back to projecting
  // a box sample when the set is a thin sliver of its bounding box.
  template <class Rng>
  Vec sample(Rng& rng) const {
    const Box b = bounding_box();
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Vec x(b.lower.size());
    for (int attempt = 0; attempt < 1000; ++attempt) {
      for (std::size_t i = 0; i < x.size(); ++i)
        x[i] = b.lower[i] + unit(rng) * (b.upper[i] - b.lower[i]);
      if (contains(x)) return x;
    }
    return project(x);
  }

 private:
  explicit FeasibleSet(Box b) : set_(std::move(b)) {}
  explicit FeasibleSet(BallBox b) : set_(std::move(b)) {}

  static const Vec& lower_of(const Box& b) { return b.lower; }
  static const Vec& lower_of(const BallBox& b) { return b.box.lower; }

  const Box& bounding_box_ref() const {
    if (const Box* b = as_box()) return *b;
    return std::get<BallBox>(set_).box;
  }

  static void validate_box(const Vec& lower, const Vec& upper) {
    if (lower.empty() || lower.size() != upper.size())
      throw Error(ErrorCode::InvalidParameter, "box bounds must be nonempty and of equal length");
    for (std::size_t i = 0; i < lower.size(); ++i) {
      if (!std::isfinite(lower[i]) || !std::isfinite(upper[i]))
        throw Error(ErrorCode::InvalidParameter, "box bounds must be finite");
      if (lower[i] > upper[i]) throw Error(ErrorCode::EmptySet, "box lower bound exceeds upper bound");
    }
  }

  static Vec clamp(std::span<const double> z, const Box& b) {
    Vec x(z.begin(), z.end());
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = std::clamp(x[i], b.lower[i], b.upper[i]);
    return x;
  }

  std::variant<Box, BallBox> set_;
};

}  // namespace qdc
