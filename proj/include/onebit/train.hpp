#pragma once

// Desk-scale VAE training for the generative prior.
//
// Objective per datum, with z = mu + exp(logvar/2) * eps and Gaussian
// likelihood variance sigma2 (1 by default):
//   0.5 * ||x - dec(z)||^2 / sigma2 + 0.5 * sum(mu^2 + exp(logvar) - 1 - logvar)
// averaged over the batch. Gradients are exact for the drawn eps.

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "onebit/core.hpp"
#include "onebit/model.hpp"

namespace onebit {

struct VaeArchitecture {
  std::size_t data_dim = 64;
  std::size_t latent_dim = 8;
  std::vector<std::size_t> encoder_hidden{32, 32};
  std::vector<std::size_t> decoder_hidden{32, 32};
  ActivationKind hidden_activation = ActivationKind::relu;
  /// sigmoid for [0,1]-valued data, identity otherwise.
  ActivationKind output_activation = ActivationKind::sigmoid;
};

/// Encoder R^n -> R^{2s} (mean then log-variance) and decoder R^s -> R^n.
struct VaeModel {
  MlpNetwork encoder;
  MlpNetwork decoder;

  std::size_t latent_dim() const noexcept { return decoder.input_dim(); }
  std::size_t data_dim() const noexcept { return decoder.output_dim(); }

  void validate() const {
    if (encoder.output_dim() != 2 * decoder.input_dim())
      throw std::invalid_argument("VaeModel: encoder output must be twice the latent dimension");
    if (encoder.input_dim() != decoder.output_dim())
      throw std::invalid_argument("VaeModel: encoder input must match decoder output");
  }
};

struct TrainConfig {
  std::size_t epochs = 200;
  std::size_t batch_size = 64;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Variance of the Gaussian reconstruction likelihood. Values below 1 keep
  /// low-dimensional sparse data from collapsing the posterior onto the prior.
  double recon_variance = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
      throw std::invalid_argument("TrainConfig: learning_rate must be finite and >= 0");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0))
      throw std::invalid_argument("TrainConfig: betas must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("TrainConfig: epsilon must be > 0");
    if (!(recon_variance > 0.0) || !std::isfinite(recon_variance))
      throw std::invalid_argument("TrainConfig: recon_variance must be finite and > 0");
  }
};

struct AdamState {
  std::vector<Vector> first;
  std::vector<Vector> second;
  std::uint64_t step = 0;
};

struct VaeGradients {
  MlpGradients encoder;
  MlpGradients decoder;
};

struct ElboResult {
  double loss = 0.0;
  double recon = 0.0;
  double kl = 0.0;
  VaeGradients grads;
};

namespace detail {

inline MlpNetwork init_network(std::size_t in_dim, const std::vector<std::size_t>& hidden, std::size_t out_dim,
                               ActivationKind hidden_act, ActivationKind out_act, RngStream& stream) {
  std::vector<std::size_t> dims{in_dim};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(out_dim);
  std::vector<MlpLayer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    const bool last = i + 2 == dims.size();
    const Activation act{last ? out_act : hidden_act};
    const double fan_in = static_cast<double>(dims[i]);
    const double variance = (act.kind == ActivationKind::relu ? 2.0 : 1.0) / fan_in;
    DenseMatrix W(dims[i + 1], dims[i], sample_gaussian(stream, dims[i + 1] * dims[i], 0.0, variance));
    layers.push_back(MlpLayer{std::move(W), Vector(dims[i + 1], 0.0), act});
  }
  return MlpNetwork(std::move(layers));
}

}  // namespace detail

/// Fan-in scaled Gaussian weights (2/fan_in before relu, 1/fan_in otherwise), zero biases.
inline VaeModel init_vae(const VaeArchitecture& arch, RngStream& stream) {
  if (arch.data_dim == 0 || arch.latent_dim == 0) throw std::invalid_argument("init_vae: dimensions must be positive");
  VaeModel vae{detail::init_network(arch.data_dim, arch.encoder_hidden, 2 * arch.latent_dim, arch.hidden_activation,
                                    ActivationKind::identity, stream),
               detail::init_network(arch.latent_dim, arch.decoder_hidden, arch.data_dim, arch.hidden_activation,
                                    arch.output_activation, stream)};
  return vae;
}

/// Parameter views in a fixed order: encoder layers then decoder layers, W then b.
inline std::vector<std::span<double>> parameter_blocks(VaeModel& vae) {
  std::vector<std::span<double>> blocks;
  for (MlpNetwork* net : {&vae.encoder, &vae.decoder}) {
    for (std::size_t i = 0; i < net->depth(); ++i) {
      auto& layer = net->layer(i);
      blocks.push_back(layer.W.entries());
      blocks.push_back(layer.b);
    }
  }
  return blocks;
}

inline std::vector<std::span<const double>> gradient_blocks(const VaeGradients& grads) {
  std::vector<std::span<const double>> blocks;
  for (const MlpGradients* g : {&grads.encoder, &grads.decoder}) {
    for (std::size_t i = 0; i < g->dW.size(); ++i) {
      blocks.push_back(g->dW[i].entries());
      blocks.push_back(g->db[i]);
    }
  }
  return blocks;
}

/// Batch ELBO with frozen reparameterization noise (batch rows x latent_dim).
inline ElboResult elbo_loss_and_grads(const VaeModel& vae, const DenseMatrix& batch, const DenseMatrix& noise,
                                      double recon_variance = 1.0) {
  vae.validate();
  const std::size_t s = vae.latent_dim();
  if (batch.cols() != vae.data_dim())
    throw std::invalid_argument("elbo_loss_and_grads: batch has " + std::to_string(batch.cols()) +
                                " columns, model expects " + std::to_string(vae.data_dim()));
  if (noise.rows() != batch.rows() || noise.cols() != s)
    throw std::invalid_argument("elbo_loss_and_grads: noise must be batch_rows x latent_dim");
  if (batch.rows() == 0) throw std::invalid_argument("elbo_loss_and_grads: empty batch");

  ElboResult result;
  result.grads.encoder = MlpGradients::zeros_like(vae.encoder);
  result.grads.decoder = MlpGradients::zeros_like(vae.decoder);
  if (!(recon_variance > 0.0)) throw std::invalid_argument("elbo_loss_and_grads: recon_variance must be > 0");
  const double inv_batch = 1.0 / static_cast<double>(batch.rows());
  const double precision = 1.0 / recon_variance;

  ForwardTrace enc_trace;
  ForwardTrace dec_trace;
  Vector z(s);
  Vector sigma(s);
  Vector enc_cot(2 * s);
  for (std::size_t row = 0; row < batch.rows(); ++row) {
    const auto x = batch.row(row);
    const auto eps = noise.row(row);
    const Vector stats = forward(vae.encoder, x, &enc_trace);
    double kl = 0.0;
    for (std::size_t j = 0; j < s; ++j) {
      const double mu = stats[j];
      const double logvar = stats[s + j];
      sigma[j] = std::exp(0.5 * logvar);
      z[j] = mu + sigma[j] * eps[j];
      kl += 0.5 * (mu * mu + sigma[j] * sigma[j] - 1.0 - logvar);
    }
    const Vector x_hat = forward(vae.decoder, z, &dec_trace);
    Vector residual(x_hat.size());
    double recon = 0.0;
    for (std::size_t i = 0; i < x_hat.size(); ++i) {
      residual[i] = x_hat[i] - x[i];
      recon += 0.5 * precision * residual[i] * residual[i];
    }
    if (!std::isfinite(recon + kl))
      throw NumericError("elbo_loss_and_grads: non-finite loss at batch index " + std::to_string(row));
    result.recon += recon * inv_batch;
    result.kl += kl * inv_batch;

    for (double& r : residual) r *= inv_batch * precision;
    const Vector dz = backward(vae.decoder, dec_trace, residual, &result.grads.decoder);
    for (std::size_t j = 0; j < s; ++j) {
      const double mu = stats[j];
      enc_cot[j] = dz[j] + inv_batch * mu;
      enc_cot[s + j] = dz[j] * eps[j] * 0.5 * sigma[j] + inv_batch * 0.5 * (sigma[j] * sigma[j] - 1.0);
    }
    backward(vae.encoder, enc_trace, enc_cot, &result.grads.encoder);
  }
  result.loss = result.recon + result.kl;
  return result;
}

/// Same as above with eps drawn from `stream`, one sample per datum.
inline ElboResult elbo_loss_and_grads(const VaeModel& vae, const DenseMatrix& batch, RngStream& stream,
                                      double recon_variance = 1.0) {
  DenseMatrix noise(batch.rows(), vae.latent_dim(), sample_gaussian(stream, batch.rows() * vae.latent_dim(), 0.0, 1.0));
  return elbo_loss_and_grads(vae, batch, noise, recon_variance);
}

/// Bias-corrected Adam update in place.
inline void adam_step(std::span<const std::span<double>> params, std::span<const std::span<const double>> grads,
                      AdamState& state, const TrainConfig& cfg) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter/gradient block count mismatch");
  if (state.first.empty() && state.second.empty()) {
    for (const auto& p : params) {
      state.first.emplace_back(p.size(), 0.0);
      state.second.emplace_back(p.size(), 0.0);
    }
  }
  if (state.first.size() != params.size() || state.second.size() != params.size())
    throw std::invalid_argument("adam_step: optimizer state does not match parameters");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != grads[k].size() || state.first[k].size() != params[k].size())
      throw std::invalid_argument("adam_step: shape mismatch in block " + std::to_string(k));
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto p = params[k];
    const auto g = grads[k];
    auto& m = state.first[k];
    auto& v = state.second[k];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      p[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

struct EpochStats {
  std::size_t epoch = 0;
  double mean_loss = 0.0;
  double recon_term = 0.0;
  double kl_term = 0.0;
};

struct TrainedVae {
  VaeModel model;
  std::vector<EpochStats> history;
};

/// Trains on the rows of `dataset`. Deterministic in (dataset, arch, cfg):
/// stream 0 initializes weights, stream 1 shuffles, stream 2 draws eps.
inline TrainedVae train_vae(const DenseMatrix& dataset, const VaeArchitecture& arch, const TrainConfig& cfg) {
  cfg.validate();
  if (dataset.rows() == 0) throw std::invalid_argument("train_vae: empty dataset");
  if (dataset.cols() != arch.data_dim)
    throw std::invalid_argument("train_vae: dataset has " + std::to_string(dataset.cols()) +
                                " columns, architecture expects " + std::to_string(arch.data_dim));
  if (!all_finite(dataset.entries())) throw std::invalid_argument("train_vae: dataset contains non-finite values");

  const RngStream root(cfg.seed);
  RngStream init_stream = derive_stream(root, 0);
  RngStream shuffle_stream = derive_stream(root, 1);
  RngStream noise_stream = derive_stream(root, 2);

  TrainedVae out{init_vae(arch, init_stream), {}};
  AdamState adam;
  const auto params = parameter_blocks(out.model);
  const std::size_t count = dataset.rows();
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (std::size_t i = count; i > 1; --i) std::swap(order[i - 1], order[shuffle_stream.uniform_index(i)]);
    EpochStats stats{epoch, 0.0, 0.0, 0.0};
    for (std::size_t start = 0; start < count; start += cfg.batch_size) {
      const std::size_t rows = std::min(cfg.batch_size, count - start);
      DenseMatrix batch(rows, dataset.cols());
      for (std::size_t r = 0; r < rows; ++r) {
        const auto src = dataset.row(order[start + r]);
        std::copy(src.begin(), src.end(), batch.row(r).begin());
      }
      ElboResult elbo;
      try {
        elbo = elbo_loss_and_grads(out.model, batch, noise_stream, cfg.recon_variance);
      } catch (const NumericError& e) {
        throw TrainingError(epoch, e.what());
      }
      const double weight = static_cast<double>(rows) / static_cast<double>(count);
      stats.mean_loss += weight * elbo.loss;
      stats.recon_term += weight * elbo.recon;
      stats.kl_term += weight * elbo.kl;
      const auto grads = gradient_blocks(elbo.grads);
      adam_step(params, grads, adam, cfg);
    }
    if (!std::isfinite(stats.mean_loss)) throw TrainingError(epoch, "training diverged (non-finite mean loss)");
    out.history.push_back(stats);
  }
  return out;
}

/// Standalone copy of the decoder.
inline MlpGenerator export_decoder(const VaeModel& vae) { return vae.decoder; }

inline nlohmann::json vae_to_json(const VaeModel& vae) {
  return {{"format_version", 1}, {"kind", "vae"}, {"encoder", network_to_json(vae.encoder)},
          {"decoder", network_to_json(vae.decoder)}};
}

inline VaeModel vae_from_json(const nlohmann::json& doc, const std::string& where = "vae") {
  VaeModel vae{network_from_json(detail::require_field(doc, "encoder", where), where + ".encoder"),
               network_from_json(detail::require_field(doc, "decoder", where), where + ".decoder")};
  try {
    vae.validate();
  } catch (const std::invalid_argument& e) {
    throw ParseError(where + ": " + e.what());
  }
  return vae;
}

}  // namespace onebit
