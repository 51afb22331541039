#pragma once

// Error metrics and estimators/calculators for the recovery-guarantee quantities.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <vector>

#include "onebit/core.hpp"

namespace onebit {

inline double mse(std::span<const double> x_true, std::span<const double> x_hat) {
  if (x_true.size() != x_hat.size()) throw std::invalid_argument("mse: length mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < x_true.size(); ++i) {
    const double d = x_true[i] - x_hat[i];
    acc += d * d;
  }
  return acc;
}

/// ||x_true/||x_true|| - x_hat/||x_hat||||^2, in [0, 4].
inline double nmse(std::span<const double> x_true, std::span<const double> x_hat) {
  if (x_true.size() != x_hat.size()) throw std::invalid_argument("nmse: length mismatch");
  const double nt = norm2(x_true);
  const double nh = norm2(x_hat);
  if (nt == 0.0 || nh == 0.0) throw DegenerateInput("nmse: zero vector has no direction");
  double acc = 0.0;
  for (std::size_t i = 0; i < x_true.size(); ++i) {
    const double d = x_true[i] / nt - x_hat[i] / nh;
    acc += d * d;
  }
  return acc;
}

/// Fraction of disagreeing coordinates.
inline double hamming_dist(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("hamming_dist: length mismatch");
  if (u.empty()) return 0.0;
  std::size_t diff = 0;
  for (std::size_t i = 0; i < u.size(); ++i) diff += u[i] != v[i] ? 1 : 0;
  return static_cast<double>(diff) / static_cast<double>(u.size());
}

/// Normalized angle arccos(<u,v>/(|u||v|)) / pi, in [0, 1].
inline double geodesic_dist(std::span<const double> u, std::span<const double> v) {
  if (u.size() != v.size()) throw std::invalid_argument("geodesic_dist: length mismatch");
  const double nu = norm2(u);
  const double nv = norm2(v);
  if (nu == 0.0 || nv == 0.0) throw DegenerateInput("geodesic_dist: zero vector");
  const double cosine = std::clamp(dot(u, v) / (nu * nv), -1.0, 1.0);
  return std::acos(cosine) / std::numbers::pi;
}

struct MetricReport {
  double mse = 0.0;
  double nmse = 0.0;
  double hamming = 0.0;
  double geodesic = 0.0;
};

/// (1/m) yᵀA x. For y = sign(A x*) with standard Gaussian A and unit x*, its
/// mean is sqrt(2/pi) xᵀx*; a keep-probability alpha scales that by 2 alpha - 1.
inline double f_statistic(const DenseMatrix& A, std::span<const double> y, std::span<const double> x) {
  if (y.size() != A.rows()) throw std::invalid_argument("f_statistic: y length does not match rows of A");
  const Vector ax = matvec(A, x);
  return dot(y, ax) / static_cast<double>(A.rows());
}

/// sup over pairs of (x - x')ᵀg for one draw g: max_x xᵀg - min_x xᵀg.
inline double width_for_direction(const std::vector<Vector>& points, std::span<const double> g) {
  double hi = -std::numeric_limits<double>::infinity();
  double lo = std::numeric_limits<double>::infinity();
  for (const auto& p : points) {
    const double proj = dot(p, g);
    hi = std::max(hi, proj);
    lo = std::min(lo, proj);
  }
  return hi - lo;
}

/// Monte-Carlo Gaussian mean width of a finite point set. Two calls with
/// equal streams use the same directions g (common random numbers).
inline double mean_width_mc(const std::vector<Vector>& points, std::size_t trials, RngStream stream) {
  if (points.empty()) throw std::invalid_argument("mean_width_mc: empty point set");
  if (trials < 1) throw std::invalid_argument("mean_width_mc: trials must be >= 1");
  const std::size_t dim = points.front().size();
  for (const auto& p : points)
    if (p.size() != dim) throw std::invalid_argument("mean_width_mc: points differ in dimension");
  double acc = 0.0;
  Vector g(dim);
  for (std::size_t t = 0; t < trials; ++t) {
    for (double& v : g) v = stream.gaussian();
    acc += width_for_direction(points, g);
  }
  return acc / static_cast<double>(trials);
}

struct MeasurementBound {
  std::uint64_t m = 0;
  /// L N w_max <= 1, so the log term was dropped.
  bool log_term_clamped = false;
};

/// ceil(C eps^-2 s (r^2 + d ln(L N w_max))), natural log.
/// C is not known in closed form; the default of 1 is for scaling studies only.
inline MeasurementBound measurement_bound(double s, double r, double d, double L, double N, double w_max, double eps,
                                          double C = 1.0) {
  for (double v : {s, r, L, N, w_max, C})
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("measurement_bound: parameters must be positive");
  if (!(d >= 0.0)) throw std::invalid_argument("measurement_bound: depth must be >= 0");
  if (!(eps > 0.0 && eps <= 1.0)) throw std::invalid_argument("measurement_bound: eps must lie in (0, 1]");
  const double product = L * N * w_max;
  MeasurementBound out;
  double inner = r * r;
  if (product > 1.0)
    inner += d * std::log(product);
  else
    out.log_term_clamped = d > 0.0;
  out.m = static_cast<std::uint64_t>(std::ceil(C * s * inner / (eps * eps)));
  return out;
}

/// (4r/t)^s, the size of a t-cover of the radius-r ball in R^s.
inline double covering_number_bound(double r, double t, double s) {
  if (!(r > 0.0) || !(t > 0.0)) throw std::invalid_argument("covering_number_bound: r and t must be > 0");
  return std::pow(4.0 * r / t, s);
}

}  // namespace onebit
