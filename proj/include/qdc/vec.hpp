#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace qdc {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double distance(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

inline Vec sub(std::span<const double> a, std::span<const double> b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
  return out;
}

// a + t * b
inline Vec axpy(std::span<const double> a, double t, std::span<const double> b) {
  Vec out(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + t * b[i];
  return out;
}

inline void add_scaled(std::span<double> acc, double t, std::span<const double> b) {
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += t * b[i];
}

// (a - b) . c
inline double dot_diff(std::span<const double> a, std::span<const double> b, std::span<const double> c) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * c[i];
  return s;
}

}  // namespace qdc
