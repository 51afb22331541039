#pragma once

// Measurement simulation: y = eta ⊙ sign(A x + noise).

#include <cmath>
#include <span>
#include <string>
#include <string_view>

#include "json.hpp"
#include "onebit/core.hpp"
#include "onebit/model.hpp"

namespace onebit {

enum class EnsembleKind { gaussian_iid, unit_sphere_columns };

inline std::string_view ensemble_name(EnsembleKind kind) {
  return kind == EnsembleKind::gaussian_iid ? "gaussian_iid" : "unit_sphere_columns";
}

inline EnsembleKind ensemble_from_name(std::string_view name) {
  if (name == "gaussian_iid") return EnsembleKind::gaussian_iid;
  if (name == "unit_sphere_columns") return EnsembleKind::unit_sphere_columns;
  throw std::invalid_argument("unknown ensemble kind '" + std::string(name) + "'");
}

/// A measurement matrix together with the law it was drawn from.
///
/// gaussian_iid: entries i.i.d. N(0, 1). This is the scaling under which the
/// correlation statistic (1/m) yᵀA x concentrates at sqrt(2/pi) xᵀx* and the
/// generative loss is unbiased (its expectation is ||x||^2 - 2 xᵀx*).
/// unit_sphere_columns: i.i.d. standard Gaussian columns normalized to unit
/// length, i.e. uniform on the sphere in R^m.
struct MeasurementEnsemble {
  EnsembleKind kind = EnsembleKind::gaussian_iid;
  DenseMatrix A;
  double perturbation_variance = 0.0;

  std::size_t m() const noexcept { return A.rows(); }
  std::size_t n() const noexcept { return A.cols(); }
};

struct NoiseConfig {
  double additive_variance = 0.0;  // v_n
  double flip_keep_prob = 1.0;     // alpha

  void validate() const {
    if (!(additive_variance >= 0.0) || !std::isfinite(additive_variance))
      throw std::invalid_argument("NoiseConfig: additive variance must be finite and >= 0");
    if (!(flip_keep_prob > 0.5 && flip_keep_prob <= 1.0))
      throw std::invalid_argument("NoiseConfig: alpha must lie in (0.5, 1]");
  }
};

/// y holds exactly +1.0 or -1.0 per measurement.
struct OneBitObservation {
  Vector y;
  NoiseConfig noise;
};

/// sign(p) = +1 if p > 0, else -1 (zero maps to -1).
inline double one_bit_sign(double p) noexcept { return p > 0.0 ? 1.0 : -1.0; }

inline Vector sign_vector(std::span<const double> v) {
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = one_bit_sign(v[i]);
  return out;
}

inline MeasurementEnsemble make_ensemble(EnsembleKind kind, std::size_t m, std::size_t n, RngStream& stream) {
  if (m < 1 || n < 1) throw std::invalid_argument("make_ensemble: m and n must be >= 1");
  DenseMatrix A(m, n, sample_gaussian(stream, m * n, 0.0, 1.0));
  if (kind == EnsembleKind::unit_sphere_columns) {
    for (std::size_t c = 0; c < n; ++c) {
      double sq = 0.0;
      for (std::size_t r = 0; r < m; ++r) sq += A(r, c) * A(r, c);
      const double inv = 1.0 / std::sqrt(sq);
      for (std::size_t r = 0; r < m; ++r) A(r, c) *= inv;
    }
  }
  return {kind, std::move(A), 0.0};
}

/// y_i = eta_i * sign((A x)_i + n_i), n_i ~ N(0, v_n), eta_i = -1 with prob 1 - alpha.
/// Additive noise is drawn first (only when v_n > 0), then the flips (only when alpha < 1).
inline OneBitObservation quantize(const MeasurementEnsemble& ens, std::span<const double> x, const NoiseConfig& noise,
                                  RngStream& stream) {
  noise.validate();
  Vector ax = matvec(ens.A, x);
  if (noise.additive_variance > 0.0) {
    const Vector additive = sample_gaussian(stream, ax.size(), 0.0, noise.additive_variance);
    for (std::size_t i = 0; i < ax.size(); ++i) ax[i] += additive[i];
  }
  Vector y = sign_vector(ax);
  if (noise.flip_keep_prob < 1.0) {
    for (double& yi : y)
      if (!stream.bernoulli(noise.flip_keep_prob)) yi = -yi;
  }
  return {std::move(y), noise};
}

/// A' = A + Delta with Delta_ij ~ N(0, v_delta). Returns a new ensemble.
inline MeasurementEnsemble perturb_matrix(const MeasurementEnsemble& ens, double v_delta, RngStream& stream) {
  if (!(v_delta >= 0.0) || !std::isfinite(v_delta))
    throw std::invalid_argument("perturb_matrix: variance must be finite and >= 0");
  MeasurementEnsemble out = ens;
  out.perturbation_variance = ens.perturbation_variance + v_delta;
  if (v_delta == 0.0) return out;
  const Vector delta = sample_gaussian(stream, ens.A.size(), 0.0, v_delta);
  auto entries = out.A.entries();
  for (std::size_t i = 0; i < entries.size(); ++i) entries[i] += delta[i];
  return out;
}

// ---- serialization ----------------------------------------------------------

inline nlohmann::json ensemble_to_json(const MeasurementEnsemble& ens) {
  return {{"format_version", 1},
          {"kind", std::string(ensemble_name(ens.kind))},
          {"m", ens.m()},
          {"n", ens.n()},
          {"v_delta", ens.perturbation_variance},
          {"entries", std::vector<double>(ens.A.entries().begin(), ens.A.entries().end())}};
}

inline MeasurementEnsemble ensemble_from_json(const nlohmann::json& doc, const std::string& where = "ensemble") {
  const auto& kind_json = detail::require_field(doc, "kind", where);
  if (!kind_json.is_string()) throw ParseError(where + ".kind: expected a string");
  EnsembleKind kind{};
  try {
    kind = ensemble_from_name(kind_json.get<std::string>());
  } catch (const std::invalid_argument& e) {
    throw ParseError(where + ".kind: " + e.what());
  }
  const auto m = detail::require_count(doc, "m", where);
  const auto n = detail::require_count(doc, "n", where);
  auto entries = detail::require_numbers(doc, "entries", where);
  if (m == 0 || n == 0 || entries.size() != m * n)
    throw ParseError(where + ".entries: expected m*n = " + std::to_string(m * n) + " values, got " +
                     std::to_string(entries.size()));
  double v_delta = 0.0;
  if (doc.contains("v_delta") && doc["v_delta"].is_number()) v_delta = doc["v_delta"].get<double>();
  return {kind, DenseMatrix(m, n, std::move(entries)), v_delta};
}

inline nlohmann::json observation_to_json(const OneBitObservation& obs) {
  return {{"format_version", 1}, {"y", obs.y}, {"v_n", obs.noise.additive_variance}, {"alpha", obs.noise.flip_keep_prob}};
}

inline OneBitObservation observation_from_json(const nlohmann::json& doc, const std::string& where = "observation") {
  OneBitObservation obs;
  obs.y = detail::require_numbers(doc, "y", where);
  for (std::size_t i = 0; i < obs.y.size(); ++i)
    if (obs.y[i] != 1.0 && obs.y[i] != -1.0) throw ParseError(where + ".y[" + std::to_string(i) + "]: must be +1 or -1");
  const auto& vn = detail::require_field(doc, "v_n", where);
  const auto& alpha = detail::require_field(doc, "alpha", where);
  if (!vn.is_number() || !alpha.is_number()) throw ParseError(where + ": v_n and alpha must be numbers");
  obs.noise = {vn.get<double>(), alpha.get<double>()};
  try {
    obs.noise.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(where + ": " + e.what());
  }
  return obs;
}

}  // namespace onebit
