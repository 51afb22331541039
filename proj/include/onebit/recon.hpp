#pragma once

// Reconstruction from one-bit measurements.
//
// gen / gen_noise_aware: fixed-step gradient descent over the latent of a
//   generator on  ||G(z)||^2 - kappa * yᵀA G(z),  kappa = sqrt(2 pi) / (m (2 alpha - 1)).
// gen_pgd: consistency step in signal space followed by projection onto the
//   generator range.
// biht, yp_convex: sparsity baselines.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <vector>

#include "onebit/analysis.hpp"
#include "onebit/core.hpp"
#include "onebit/model.hpp"
#include "onebit/sensing.hpp"

namespace onebit {

struct GenOpts {
  std::size_t restarts = 10;
  std::size_t steps_per_restart = 100;
  double step_size = 0.01;
  /// Bound on ||z||; unset means unconstrained.
  std::optional<double> latent_radius;
  /// Rescale x_hat onto the unit ball after optimization.
  bool project_output_unit_ball = false;
  /// Sign-flip keep probability used by the noise-aware loss.
  std::optional<double> alpha_known;
  /// Restarts run on up to this many threads; results do not depend on it.
  std::size_t threads = 1;

  void validate() const {
    if (restarts < 1) throw std::invalid_argument("GenOpts: restarts must be >= 1");
    if (!(step_size > 0.0) || !std::isfinite(step_size)) throw std::invalid_argument("GenOpts: step_size must be > 0");
    if (latent_radius && !(*latent_radius > 0.0)) throw std::invalid_argument("GenOpts: latent radius must be > 0");
    if (alpha_known && !(*alpha_known > 0.5 && *alpha_known <= 1.0))
      throw std::invalid_argument("GenOpts: alpha must lie in (0.5, 1]");
  }
};

struct ReconResult {
  Vector x_hat;
  std::optional<Vector> z_hat;
  double best_loss = std::numeric_limits<double>::infinity();
  /// Best loss reached by each restart; NaN for abandoned restarts.
  Vector per_restart_losses;
  std::vector<Vector> loss_traces;
  std::size_t iterations_used = 0;
  std::size_t abandoned_restarts = 0;
};

namespace detail {

inline void check_measurements(const DenseMatrix& A, std::span<const double> y) {
  if (y.size() != A.rows())
    throw std::invalid_argument("measurement vector has " + std::to_string(y.size()) + " entries, matrix has " +
                                std::to_string(A.rows()) + " rows");
}

/// kappa * Aᵀy, the fixed linear term of the generative loss.
inline Vector correlation_term(const DenseMatrix& A, std::span<const double> y, double alpha) {
  check_measurements(A, y);
  const double kappa = std::sqrt(2.0 * std::numbers::pi) / (static_cast<double>(A.rows()) * (2.0 * alpha - 1.0));
  Vector c = matvec_t(A, y);
  for (double& v : c) v *= kappa;
  return c;
}

inline void project_ball(Vector& z, std::optional<double> radius) {
  if (!radius) return;
  const double nz = norm2(z);
  if (nz > *radius) {
    const double scale = *radius / nz;
    for (double& v : z) v *= scale;
  }
}

struct RestartOutcome {
  bool abandoned = false;
  double best_loss = std::numeric_limits<double>::quiet_NaN();
  Vector best_z;
  Vector best_x;
  Vector trace;
  std::size_t steps = 0;
};

inline RestartOutcome descend_once(const MlpGenerator& G, std::span<const double> corr, const GenOpts& opts,
                                   RngStream stream) {
  RestartOutcome out;
  Vector z = sample_gaussian(stream, G.input_dim(), 0.0, 1.0);
  project_ball(z, opts.latent_radius);
  ForwardTrace trace;
  Vector cot(G.output_dim());
  try {
    for (std::size_t step = 0;; ++step) {
      const Vector x = forward(G, z, &trace);
      const double loss = dot(x, x) - dot(corr, x);
      if (!std::isfinite(loss)) throw NumericError("non-finite loss");
      out.trace.push_back(loss);
      if (out.best_z.empty() || loss < out.best_loss) {
        out.best_loss = loss;
        out.best_z = z;
        out.best_x = x;
      }
      if (step == opts.steps_per_restart) break;
      for (std::size_t i = 0; i < cot.size(); ++i) cot[i] = 2.0 * x[i] - corr[i];
      const Vector grad = backward(G, trace, cot);
      for (std::size_t j = 0; j < z.size(); ++j) z[j] -= opts.step_size * grad[j];
      project_ball(z, opts.latent_radius);
      ++out.steps;
    }
  } catch (const NumericError&) {
    out.abandoned = true;
    out.best_loss = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

/// Restarts from derive_stream(stream, r); argmin over best losses with the
/// lowest restart index winning ties, so the result is schedule independent.
inline ReconResult latent_descent(const MlpGenerator& G, std::span<const double> corr, const GenOpts& opts,
                                  const RngStream& stream) {
  opts.validate();
  if (corr.size() != G.output_dim())
    throw std::invalid_argument("generator output dim " + std::to_string(G.output_dim()) +
                                " does not match signal dim " + std::to_string(corr.size()));
  std::vector<RestartOutcome> outcomes(opts.restarts);
  parallel_for(opts.restarts, opts.threads,
               [&](std::size_t r) { outcomes[r] = descend_once(G, corr, opts, derive_stream(stream, r)); });

  ReconResult result;
  std::optional<std::size_t> winner;
  for (std::size_t r = 0; r < outcomes.size(); ++r) {
    const auto& o = outcomes[r];
    result.per_restart_losses.push_back(o.best_loss);
    result.loss_traces.push_back(o.trace);
    result.iterations_used += o.steps;
    if (o.abandoned) {
      ++result.abandoned_restarts;
      continue;
    }
    if (!winner || o.best_loss < outcomes[*winner].best_loss) winner = r;
  }
  if (!winner) throw NumericError("latent descent: every restart produced a non-finite loss");
  const auto& best = outcomes[*winner];
  result.best_loss = best.best_loss;
  result.z_hat = best.best_z;
  result.x_hat = best.best_x;
  if (opts.project_output_unit_ball) {
    const double nx = norm2(result.x_hat);
    if (nx > 1.0)
      for (double& v : result.x_hat) v /= nx;
  }
  return result;
}

}  // namespace detail

/// ||G(z)||^2 - (sqrt(2 pi)/m) yᵀA G(z)
inline double loss_gen(const MlpGenerator& G, std::span<const double> z, const DenseMatrix& A,
                       std::span<const double> y) {
  detail::check_measurements(A, y);
  const Vector x = forward(G, z);
  const Vector ax = matvec(A, x);
  const double kappa = std::sqrt(2.0 * std::numbers::pi) / static_cast<double>(A.rows());
  return dot(x, x) - kappa * dot(y, ax);
}

inline Vector grad_loss_gen(const MlpGenerator& G, std::span<const double> z, const DenseMatrix& A,
                            std::span<const double> y) {
  const Vector corr = detail::correlation_term(A, y, 1.0);
  if (corr.size() != G.output_dim()) throw std::invalid_argument("grad_loss_gen: generator/matrix dimension mismatch");
  ForwardTrace trace;
  const Vector x = forward(G, z, &trace);
  Vector cot(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) cot[i] = 2.0 * x[i] - corr[i];
  return backward(G, trace, cot);
}

inline ReconResult reconstruct_gen(const MlpGenerator& G, const DenseMatrix& A, std::span<const double> y,
                                   const GenOpts& opts, const RngStream& stream) {
  const Vector corr = detail::correlation_term(A, y, 1.0);
  return detail::latent_descent(G, corr, opts, stream);
}

/// Same optimizer with the correlation term scaled by 1/(2 alpha - 1).
inline ReconResult reconstruct_gen_noise_aware(const MlpGenerator& G, const DenseMatrix& A, std::span<const double> y,
                                               double alpha, const GenOpts& opts, const RngStream& stream) {
  if (!(alpha > 0.5 && alpha <= 1.0))
    throw std::invalid_argument("reconstruct_gen_noise_aware: alpha must lie in (0.5, 1]");
  const Vector corr = detail::correlation_term(A, y, alpha);
  return detail::latent_descent(G, corr, opts, stream);
}

/// Keeps the k largest-magnitude entries (ties go to the lower index), zeroes the rest.
inline Vector top_k(std::span<const double> v, std::size_t k) {
  if (k > v.size()) throw std::invalid_argument("top_k: k exceeds vector length");
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      const double fa = std::abs(v[a]);
                      const double fb = std::abs(v[b]);
                      return fa > fb || (fa == fb && a < b);
                    });
  Vector out(v.size(), 0.0);
  for (std::size_t i = 0; i < k; ++i) out[idx[i]] = v[idx[i]];
  return out;
}

struct BihtOpts {
  std::size_t iters = 100;
  double step = 1.0;  // tau
};

/// Binary iterative hard thresholding.
///   x <- top_K(x + (tau/m) Aᵀ(y - sign(A x)))
/// from the unit-normalized top_K(Aᵀy); the final iterate is returned with unit norm.
inline Vector biht(const DenseMatrix& A, std::span<const double> y, std::size_t K, const BihtOpts& opts = {}) {
  detail::check_measurements(A, y);
  if (K < 1 || K > A.cols()) throw std::invalid_argument("biht: sparsity K must lie in [1, n]");
  Vector x = top_k(matvec_t(A, y), K);
  double nx = norm2(x);
  if (nx == 0.0) return x;
  for (double& v : x) v /= nx;
  const double scale = opts.step / static_cast<double>(A.rows());
  for (std::size_t it = 0; it < opts.iters; ++it) {
    const Vector ax = matvec(A, x);
    Vector residual(y.size());
    bool consistent = true;
    for (std::size_t i = 0; i < y.size(); ++i) {
      residual[i] = y[i] - one_bit_sign(ax[i]);
      consistent = consistent && residual[i] == 0.0;
    }
    if (consistent) break;
    const Vector step = matvec_t(A, residual);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] += scale * step[j];
    x = top_k(x, K);
  }
  nx = norm2(x);
  if (nx > 0.0)
    for (double& v : x) v /= nx;
  return x;
}

/// Euclidean projection onto {x : ||x||_1 <= radius} by sort and threshold.
inline Vector project_l1_ball(std::span<const double> v, double radius) {
  if (!(radius > 0.0)) throw std::invalid_argument("project_l1_ball: radius must be > 0");
  double l1 = 0.0;
  for (double a : v) l1 += std::abs(a);
  if (l1 <= radius) return Vector(v.begin(), v.end());
  Vector mags(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) mags[i] = std::abs(v[i]);
  std::sort(mags.begin(), mags.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (std::size_t j = 0; j < mags.size(); ++j) {
    cumulative += mags[j];
    const double candidate = (cumulative - radius) / static_cast<double>(j + 1);
    if (mags[j] - candidate > 0.0) theta = candidate;
  }
  Vector out(v.size());
  for (;;) {
    double out_l1 = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double shrunk = std::max(std::abs(v[i]) - theta, 0.0);
      out[i] = v[i] < 0.0 ? -shrunk : shrunk;
      out_l1 += shrunk;
    }
    // rounding can leave the sum an ulp above the radius; nudge theta up
    if (out_l1 <= radius) break;
    theta = std::nextafter(theta + (out_l1 - radius) / static_cast<double>(v.size()), INFINITY);
  }
  return out;
}

struct YpEstimate {
  Vector x;
  /// Set when Aᵀy = 0; x is then the zero vector.
  bool degenerate = false;
};

namespace detail {

inline Vector soft_threshold(std::span<const double> c, double lambda) {
  Vector out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) {
    const double shrunk = std::max(std::abs(c[i]) - lambda, 0.0);
    out[i] = c[i] < 0.0 ? -shrunk : shrunk;
  }
  return out;
}

inline double l1_over_l2(std::span<const double> x) {
  double l1 = 0.0;
  for (double v : x) l1 += std::abs(v);
  const double l2 = norm2(x);
  return l2 > 0.0 ? l1 / l2 : 0.0;
}

}  // namespace detail

/// Maximizes (Aᵀy)ᵀx over {||x||_2 <= 1, ||x||_1 <= l1_budget}.
///
/// The maximizer is proportional to soft_threshold(Aᵀy, lambda); lambda is
/// found by bisection so the l1/l2 ratio meets the budget, approached from the
/// feasible side. The result has unit l2 norm whenever the budget admits a unit
/// vector aligned with the largest entries; otherwise (budget below sqrt of the
/// number of tied maxima, e.g. any budget < 1) it is scaled down to the l1 budget.
inline YpEstimate yp_convex(const DenseMatrix& A, std::span<const double> y, double l1_budget) {
  detail::check_measurements(A, y);
  if (!(l1_budget > 0.0)) throw std::invalid_argument("yp_convex: l1 budget must be > 0");
  const Vector c = matvec_t(A, y);
  double cmax = 0.0;
  for (double v : c) cmax = std::max(cmax, std::abs(v));
  if (cmax == 0.0) return {Vector(c.size(), 0.0), true};

  auto unit = [](Vector x) {
    const double nx = norm2(x);
    for (double& v : x) v /= nx;
    return x;
  };
  if (detail::l1_over_l2(c) <= l1_budget) return {unit(c), false};

  // ratio(lambda) is nonincreasing on [0, cmax); hi stays feasible.
  double lo = 0.0;
  double hi = cmax;
  std::size_t ties = 0;
  for (double v : c) ties += std::abs(v) == cmax ? 1 : 0;
  const double floor_ratio = std::sqrt(static_cast<double>(ties));
  if (floor_ratio > l1_budget) {
    // No unit vector fits: spread the l1 budget evenly over the tied maxima.
    Vector x(c.size(), 0.0);
    for (std::size_t i = 0; i < c.size(); ++i)
      if (std::abs(c[i]) == cmax) x[i] = (c[i] > 0.0 ? 1.0 : -1.0) * l1_budget / static_cast<double>(ties);
    return {x, false};
  }
  for (int it = 0; it < 200 && hi - lo > 1e-15 * cmax; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (detail::l1_over_l2(detail::soft_threshold(c, mid)) > l1_budget)
      lo = mid;
    else
      hi = mid;
  }
  Vector x = detail::soft_threshold(c, hi);
  if (norm2(x) == 0.0) {
    // hi collapsed onto cmax: the tied maxima alone are the answer.
    for (std::size_t i = 0; i < c.size(); ++i) x[i] = std::abs(c[i]) == cmax ? c[i] : 0.0;
  }
  return {unit(std::move(x)), false};
}

struct PgdOpts {
  std::size_t outer_iters = 30;
  double step = 1.0;  // tau of the consistency step
  std::size_t inner_steps = 100;
  double inner_step_size = 0.05;
  /// Random latent starts tried by every range projection besides the warm start.
  std::size_t projection_restarts = 4;
  std::size_t threads = 1;
};

/// Gradient descent on ||G(z) - target||^2 started at z.
inline Vector descend_to_target(const MlpGenerator& G, std::span<const double> target, Vector z, std::size_t steps,
                                double step_size) {
  ForwardTrace trace;
  Vector cot(G.output_dim());
  for (std::size_t it = 0; it < steps; ++it) {
    const Vector x = forward(G, z, &trace);
    for (std::size_t i = 0; i < x.size(); ++i) cot[i] = 2.0 * (x[i] - target[i]);
    const Vector grad = backward(G, trace, cot);
    for (std::size_t j = 0; j < z.size(); ++j) z[j] -= step_size * grad[j];
  }
  return z;
}

/// Approximate projection onto the generator range: the closest G(z) found by
/// descent from the warm start and from `restarts` latents drawn from `stream`.
/// The warm start wins ties.
inline Vector project_to_range(const MlpGenerator& G, std::span<const double> target, const Vector& warm_start,
                               std::size_t steps, double step_size, std::size_t restarts, RngStream& stream) {
  if (target.size() != G.output_dim()) throw std::invalid_argument("project_to_range: target dimension mismatch");
  Vector best = descend_to_target(G, target, warm_start, steps, step_size);
  double best_dist = mse(target, forward(G, best));
  for (std::size_t r = 0; r < restarts; ++r) {
    Vector z = descend_to_target(G, target, sample_gaussian(stream, G.input_dim(), 0.0, 1.0), steps, step_size);
    const double dist = mse(target, forward(G, z));
    if (dist < best_dist) {
      best_dist = dist;
      best = std::move(z);
    }
  }
  return best;
}

/// Projected consistency descent onto the generator range:
///   x <- P_G(x + (tau/m) Aᵀ(y - sign(A x)))
/// starting from x = G(z0) with z0 drawn from `stream`. best_loss reports the
/// fraction of measurements whose sign the estimate gets wrong.
inline ReconResult gen_pgd(const MlpGenerator& G, const DenseMatrix& A, std::span<const double> y, const PgdOpts& opts,
                           const RngStream& stream) {
  detail::check_measurements(A, y);
  if (G.output_dim() != A.cols()) throw std::invalid_argument("gen_pgd: generator/matrix dimension mismatch");
  const double scale = opts.step / static_cast<double>(A.rows());
  RngStream local = derive_stream(stream, 0);

  ReconResult result;
  Vector z = sample_gaussian(local, G.input_dim(), 0.0, 1.0);
  Vector x = forward(G, z);
  for (std::size_t t = 0; t < opts.outer_iters; ++t) {
    const Vector ax = matvec(A, x);
    Vector residual(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) residual[i] = y[i] - one_bit_sign(ax[i]);
    const Vector step = matvec_t(A, residual);
    for (std::size_t j = 0; j < x.size(); ++j) x[j] += scale * step[j];
    z = project_to_range(G, x, z, opts.inner_steps, opts.inner_step_size, opts.projection_restarts, local);
    x = forward(G, z);
    ++result.iterations_used;
  }
  const Vector ax = matvec(A, x);
  std::size_t wrong = 0;
  for (std::size_t i = 0; i < y.size(); ++i) wrong += one_bit_sign(ax[i]) != y[i] ? 1 : 0;
  result.best_loss = static_cast<double>(wrong) / static_cast<double>(y.size());
  result.per_restart_losses = {result.best_loss};
  result.x_hat = std::move(x);
  result.z_hat = std::move(z);
  return result;
}

}  // namespace onebit
