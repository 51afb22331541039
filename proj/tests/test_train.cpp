#include <gtest/gtest.h>

#include <cmath>

#include "onebit/data.hpp"
#include "onebit/train.hpp"
#include "test_util.hpp"

using namespace onebit;

namespace {

VaeArchitecture small_arch() {
  VaeArchitecture a;
  a.data_dim = 5;
  a.latent_dim = 2;
  a.encoder_hidden = {4};
  a.decoder_hidden = {3};
  a.hidden_activation = ActivationKind::tanh;  // smooth, so finite differences are clean
  a.output_activation = ActivationKind::sigmoid;
  return a;
}

// Independent negative ELBO: mean over rows of ||G(mu + sigma eps) - x||^2/(2 v) + KL(N(mu, sigma^2) || N(0, I)).
double elbo_oracle(const VaeModel& vae, const DenseMatrix& batch, const DenseMatrix& noise, double v) {
  const std::size_t s = vae.latent_dim();
  double total = 0.0;
  for (std::size_t r = 0; r < batch.rows(); ++r) {
    const auto stats = forward(vae.encoder, batch.row(r));
    Vector z(s);
    double kl = 0.0;
    for (std::size_t j = 0; j < s; ++j) {
      const double mu = stats[j], logvar = stats[s + j];
      z[j] = mu + std::exp(0.5 * logvar) * noise(r, j);
      kl += 0.5 * (mu * mu + std::exp(logvar) - 1.0 - logvar);
    }
    const auto xh = forward(vae.decoder, z);
    double rec = 0.0;
    for (std::size_t i = 0; i < xh.size(); ++i) rec += (xh[i] - batch(r, i)) * (xh[i] - batch(r, i));
    total += rec / (2.0 * v) + kl;
  }
  return total / static_cast<double>(batch.rows());
}

}  // namespace

TEST(Elbo, LossMatchesIndependentFormula) {
  RngStream s(201, 0);
  const auto vae = init_vae(small_arch(), s);
  const DenseMatrix batch(3, 5, sample_gaussian(s, 15, 0.5, 0.1));
  const DenseMatrix noise(3, 2, sample_gaussian(s, 6, 0.0, 1.0));
  for (double v : {1.0, 0.05}) {
    const auto r = elbo_loss_and_grads(vae, batch, noise, v);
    EXPECT_NEAR(r.loss, elbo_oracle(vae, batch, noise, v), 1e-12);
    EXPECT_NEAR(r.loss, r.recon + r.kl, 1e-12);
    EXPECT_GE(r.kl, 0.0);
  }
}

TEST(Elbo, GradientsMatchFiniteDifferences) {
  RngStream s(202, 0);
  VaeModel vae = init_vae(small_arch(), s);
  // Non-zero biases so every path is exercised.
  for (auto& p : parameter_blocks(vae))
    for (double& v : p) v += 0.1 * s.gaussian();
  const DenseMatrix batch(4, 5, sample_gaussian(s, 20, 0.5, 0.1));
  const DenseMatrix noise(4, 2, sample_gaussian(s, 8, 0.0, 1.0));
  const double v = 0.3;
  const auto r = elbo_loss_and_grads(vae, batch, noise, v);
  auto params = parameter_blocks(vae);
  const auto grads = gradient_blocks(r.grads);
  ASSERT_EQ(params.size(), grads.size());
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (std::size_t i = 0; i < params[b].size(); ++i) {
      const double keep = params[b][i];
      params[b][i] = keep + 1e-5;
      const double up = elbo_oracle(vae, batch, noise, v);
      params[b][i] = keep - 1e-5;
      const double down = elbo_oracle(vae, batch, noise, v);
      params[b][i] = keep;
      EXPECT_TRUE(testutil::close_rel(grads[b][i], (up - down) / 2e-5, 1e-4, 1e-7))
          << "block " << b << " entry " << i << ": " << grads[b][i] << " vs " << (up - down) / 2e-5;
    }
  }
}

TEST(Elbo, RejectsShapeMismatch) {
  RngStream s(203, 0);
  const auto vae = init_vae(small_arch(), s);
  EXPECT_THROW(elbo_loss_and_grads(vae, DenseMatrix(2, 4), DenseMatrix(2, 2)), std::invalid_argument);
  EXPECT_THROW(elbo_loss_and_grads(vae, DenseMatrix(2, 5), DenseMatrix(2, 3)), std::invalid_argument);
}

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
  // After one step m_hat = g and v_hat = g^2, so the update is lr * g / (|g| + eps).
  Vector p{1.0, -2.0, 0.5};
  const Vector g{0.3, -4.0, 0.0};
  TrainConfig cfg;
  cfg.learning_rate = 0.01;
  AdamState st;
  std::vector<std::span<double>> ps{p};
  std::vector<std::span<const double>> gs{g};
  adam_step(ps, gs, st, cfg);
  EXPECT_NEAR(p[0], 1.0 - 0.01 * 0.3 / (0.3 + 1e-8), 1e-15);
  EXPECT_NEAR(p[1], -2.0 + 0.01 * 4.0 / (4.0 + 1e-8), 1e-15);
  EXPECT_EQ(p[2], 0.5);
  EXPECT_EQ(st.step, 1u);
}

TEST(Adam, SecondStepMatchesRecurrence) {
  Vector p{0.0};
  TrainConfig cfg;
  cfg.learning_rate = 0.1;
  AdamState st;
  std::vector<std::span<double>> ps{p};
  const Vector g1{1.0}, g2{-3.0};
  adam_step(ps, std::vector<std::span<const double>>{g1}, st, cfg);
  const double after1 = p[0];
  adam_step(ps, std::vector<std::span<const double>>{g2}, st, cfg);
  const double m = 0.9 * 0.1 * 1.0 + 0.1 * -3.0;
  const double v = 0.999 * 0.001 * 1.0 + 0.001 * 9.0;
  const double mh = m / (1 - 0.81), vh = v / (1 - 0.999 * 0.999);
  EXPECT_NEAR(p[0], after1 - 0.1 * mh / (std::sqrt(vh) + 1e-8), 1e-14);
}

TEST(Adam, RejectsMismatchedBlocks) {
  Vector p{0.0, 1.0};
  const Vector g{1.0};
  AdamState st;
  std::vector<std::span<double>> ps{p};
  EXPECT_THROW(adam_step(ps, std::vector<std::span<const double>>{g}, st, TrainConfig{}), std::invalid_argument);
}

TEST(TrainVae, DeterministicAndLearns) {
  RngStream data_stream(204, 0);
  SparseSpec spec;
  spec.n = 12;
  spec.k = 2;
  spec.normalize = true;
  const auto data = sample_sparse_dataset(spec, 256, data_stream);
  VaeArchitecture arch;
  arch.data_dim = 12;
  arch.latent_dim = 3;
  arch.encoder_hidden = {16};
  arch.decoder_hidden = {16};
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.batch_size = 32;
  cfg.learning_rate = 3e-3;
  cfg.recon_variance = 0.05;
  cfg.seed = 9;
  const auto a = train_vae(data, arch, cfg);
  const auto b = train_vae(data, arch, cfg);
  ASSERT_EQ(a.history.size(), 15u);
  EXPECT_EQ(a.model.decoder.layers()[0].W, b.model.decoder.layers()[0].W);
  EXPECT_EQ(a.model.encoder.layers()[1].b, b.model.encoder.layers()[1].b);
  EXPECT_LT(a.history.back().mean_loss, a.history.front().mean_loss);
}

TEST(TrainVae, ZeroLearningRateKeepsInitialization) {
  RngStream data_stream(205, 0);
  const DenseMatrix data(10, 5, sample_gaussian(data_stream, 50, 0.5, 0.01));
  const auto arch = small_arch();
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.learning_rate = 0.0;
  cfg.seed = 3;
  const auto trained = train_vae(data, arch, cfg);
  RngStream init = derive_stream(RngStream(3), 0);
  const auto fresh = init_vae(arch, init);
  for (std::size_t l = 0; l < fresh.decoder.depth(); ++l)
    EXPECT_EQ(trained.model.decoder.layers()[l].W, fresh.decoder.layers()[l].W);
}

TEST(TrainVae, DivergenceReportsEpoch) {
  RngStream data_stream(206, 0);
  const DenseMatrix data(16, 5, sample_gaussian(data_stream, 80, 0.0, 1e6));
  auto arch = small_arch();
  arch.hidden_activation = ActivationKind::identity;
  arch.output_activation = ActivationKind::identity;
  TrainConfig cfg;
  cfg.epochs = 50;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e150;
  cfg.recon_variance = 1e-300;
  try {
    train_vae(data, arch, cfg);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_GE(e.epoch(), 1u);
  }
}

TEST(TrainVae, RejectsBadInputs) {
  const auto arch = small_arch();
  EXPECT_THROW(train_vae(DenseMatrix(4, 6), arch, TrainConfig{}), std::invalid_argument);
  EXPECT_THROW(train_vae(DenseMatrix(0, 5), arch, TrainConfig{}), std::invalid_argument);
  TrainConfig bad;
  bad.batch_size = 0;
  EXPECT_THROW(train_vae(DenseMatrix(4, 5), arch, bad), std::invalid_argument);
}

TEST(VaeFile, RoundTripAndExport) {
  RngStream s(207, 0);
  const auto vae = init_vae(small_arch(), s);
  const auto back = vae_from_json(vae_to_json(vae));
  EXPECT_EQ(back.encoder.layers()[0].W, vae.encoder.layers()[0].W);
  const auto dec = export_decoder(back);
  EXPECT_EQ(dec.input_dim(), 2u);
  EXPECT_EQ(dec.output_dim(), 5u);
  EXPECT_EQ(dec.layers()[1].W, vae.decoder.layers()[1].W);
}
