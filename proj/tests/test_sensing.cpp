#include <gtest/gtest.h>

#include <cmath>

#include "onebit/sensing.hpp"
#include "test_util.hpp"

using namespace onebit;

TEST(Sign, ZeroMapsToMinusOne) {
  EXPECT_EQ(one_bit_sign(0.0), -1.0);
  EXPECT_EQ(one_bit_sign(-0.0), -1.0);
  EXPECT_EQ(one_bit_sign(1e-300), 1.0);
  EXPECT_EQ(sign_vector(Vector{2, 0, -3}), (Vector{1, -1, -1}));
}

TEST(Ensemble, GaussianEntriesHaveUnitVariance) {
  RngStream s(301, 0);
  const auto ens = make_ensemble(EnsembleKind::gaussian_iid, 200, 50, s);
  double sq = 0.0;
  for (double v : ens.A.entries()) sq += v * v;
  EXPECT_NEAR(sq / ens.A.size(), 1.0, 0.15);
  EXPECT_EQ(ens.m(), 200u);
  EXPECT_EQ(ens.n(), 50u);
}

TEST(Ensemble, SphereColumnsHaveUnitNorm) {
  RngStream s(302, 0);
  const auto ens = make_ensemble(EnsembleKind::unit_sphere_columns, 30, 7, s);
  for (std::size_t c = 0; c < 7; ++c) {
    double sq = 0.0;
    for (std::size_t r = 0; r < 30; ++r) sq += ens.A(r, c) * ens.A(r, c);
    EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-12);
  }
  EXPECT_THROW(make_ensemble(EnsembleKind::gaussian_iid, 0, 3, s), std::invalid_argument);
  EXPECT_EQ(ensemble_from_name("unit_sphere_columns"), EnsembleKind::unit_sphere_columns);
  EXPECT_THROW(ensemble_from_name("bernoulli"), std::invalid_argument);
}

TEST(Quantize, NoiselessIsSignOfProduct) {
  RngStream s(303, 0);
  const auto ens = make_ensemble(EnsembleKind::gaussian_iid, 64, 8, s);
  const auto x = sample_gaussian(s, 8, 0.0, 1.0);
  const auto obs = quantize(ens, x, {}, s);
  EXPECT_EQ(obs.y, sign_vector(matvec(ens.A, x)));
  const auto zero = quantize(ens, Vector(8, 0.0), {}, s);
  for (double y : zero.y) EXPECT_EQ(y, -1.0);
}

TEST(Quantize, FlipRateIsOneMinusAlpha) {
  RngStream s(304, 0);
  const std::size_t m = 100000;
  const MeasurementEnsemble ens{EnsembleKind::gaussian_iid, DenseMatrix(m, 1, 1.0), 0.0};
  const auto obs = quantize(ens, Vector{1.0}, {0.0, 0.9}, s);
  double flips = 0.0;
  for (double y : obs.y) flips += y < 0.0;
  EXPECT_NEAR(flips / m, 0.1, 4.0 * std::sqrt(0.09 / m));
}

TEST(Quantize, AdditiveNoiseDisagreementMatchesNormalTail) {
  // Ax = c for every row, so a sign disagreement needs n_i < -c: probability Phi(-c / sqrt(v_n)).
  RngStream s(305, 0);
  const std::size_t m = 100000;
  const double c = 0.3, vn = 0.25;
  const MeasurementEnsemble ens{EnsembleKind::gaussian_iid, DenseMatrix(m, 1, c), 0.0};
  const auto obs = quantize(ens, Vector{1.0}, {vn, 1.0}, s);
  double wrong = 0.0;
  for (double y : obs.y) wrong += y < 0.0;
  const double p = testutil::phi(-c / std::sqrt(vn));
  EXPECT_NEAR(wrong / m, p, 4.0 * std::sqrt(p * (1 - p) / m));
}

TEST(Quantize, RejectsBadNoise) {
  RngStream s(306, 0);
  const auto ens = make_ensemble(EnsembleKind::gaussian_iid, 4, 2, s);
  EXPECT_THROW(quantize(ens, Vector{1, 0}, {0.0, 0.5}, s), std::invalid_argument);
  EXPECT_THROW(quantize(ens, Vector{1, 0}, {-0.1, 1.0}, s), std::invalid_argument);
  EXPECT_THROW(quantize(ens, Vector{1, 0, 0}, {}, s), std::invalid_argument);
}

TEST(Perturb, ZeroVarianceIsIdentityAndVarianceIsRight) {
  RngStream s(307, 0);
  const auto ens = make_ensemble(EnsembleKind::gaussian_iid, 300, 100, s);
  EXPECT_EQ(perturb_matrix(ens, 0.0, s).A, ens.A);
  const auto p = perturb_matrix(ens, 0.05, s);
  double sq = 0.0;
  for (std::size_t i = 0; i < ens.A.size(); ++i) {
    const double d = p.A.entries()[i] - ens.A.entries()[i];
    sq += d * d;
  }
  EXPECT_NEAR(sq / ens.A.size(), 0.05, 0.05 * 4.0 * std::sqrt(2.0 / ens.A.size()));
  EXPECT_DOUBLE_EQ(p.perturbation_variance, 0.05);
  EXPECT_THROW(perturb_matrix(ens, -1.0, s), std::invalid_argument);
}

TEST(SensingFiles, RoundTrip) {
  RngStream s(308, 0);
  const auto ens = make_ensemble(EnsembleKind::unit_sphere_columns, 6, 3, s);
  const auto back = ensemble_from_json(ensemble_to_json(ens));
  EXPECT_EQ(back.A, ens.A);
  EXPECT_EQ(back.kind, ens.kind);
  const auto obs = quantize(ens, Vector{1, -1, 0.5}, {0.1, 0.9}, s);
  const auto obs2 = observation_from_json(observation_to_json(obs));
  EXPECT_EQ(obs2.y, obs.y);
  EXPECT_EQ(obs2.noise.flip_keep_prob, 0.9);
  auto bad = observation_to_json(obs);
  bad["y"][0] = 0.5;
  EXPECT_THROW(observation_from_json(bad), ParseError);
}
