#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "onebit/model.hpp"
#include "test_util.hpp"

using namespace onebit;

namespace {

MlpNetwork hand_net() {
  // 2 -> 2 (relu) -> 1 (identity)
  return MlpNetwork({{DenseMatrix(2, 2, Vector{1, -2, 0.5, 1}), Vector{0.1, -0.2}, {ActivationKind::relu}},
                     {DenseMatrix(1, 2, Vector{2, -1}), Vector{0.3}, {ActivationKind::identity}}});
}

}  // namespace

TEST(Activation, ValuesAndDerivatives) {
  const Activation relu{ActivationKind::relu}, sig{ActivationKind::sigmoid}, th{ActivationKind::tanh};
  EXPECT_EQ(relu.apply(-1.0), 0.0);
  EXPECT_EQ(relu.apply(2.5), 2.5);
  EXPECT_EQ(relu.derivative(0.0, 0.0), 0.0);
  EXPECT_DOUBLE_EQ(sig.apply(0.0), 0.5);
  EXPECT_DOUBLE_EQ(sig.derivative(0.0, 0.5), 0.25);
  EXPECT_DOUBLE_EQ(th.derivative(0.3, std::tanh(0.3)), 1.0 - std::tanh(0.3) * std::tanh(0.3));
  EXPECT_FALSE(Activation::from_name("softplus").has_value());
  for (auto k : {ActivationKind::relu, ActivationKind::sigmoid, ActivationKind::tanh, ActivationKind::identity})
    EXPECT_EQ(Activation::from_name(Activation{k}.name())->kind, k);
}

TEST(MlpNetwork, ForwardHandValue) {
  const auto net = hand_net();
  // layer 1: (1*1 - 2*2 + 0.1, 0.5*1 + 1*2 - 0.2) = (-2.9, 2.3) -> relu (0, 2.3)
  // layer 2: 2*0 - 2.3 + 0.3 = -2.0
  const auto y = forward(net, Vector{1, 2});
  ASSERT_EQ(y.size(), 1u);
  EXPECT_DOUBLE_EQ(y[0], -2.0);
}

TEST(MlpNetwork, RejectsBrokenChains) {
  EXPECT_THROW(MlpNetwork(std::vector<MlpLayer>{}), std::invalid_argument);
  EXPECT_THROW(MlpNetwork({{DenseMatrix(2, 2), Vector{0}, {}}}), std::invalid_argument);
  EXPECT_THROW(MlpNetwork({{DenseMatrix(2, 2), Vector{0, 0}, {}}, {DenseMatrix(1, 3), Vector{0}, {}}}),
               std::invalid_argument);
  EXPECT_THROW(forward(hand_net(), Vector{1, 2, 3}), std::invalid_argument);
}

TEST(MlpNetwork, WidthIncludesInput) {
  const MlpNetwork net({{DenseMatrix(3, 8, 0.1), Vector(3, 0.0), {ActivationKind::relu}}});
  EXPECT_EQ(net.max_width(), 8u);
  EXPECT_DOUBLE_EQ(net.max_abs_weight(), 0.1);
}

TEST(MlpNetwork, NonFiniteActivationRaises) {
  const MlpNetwork net({{DenseMatrix(1, 1, Vector{1e308}), Vector{0.0}, {ActivationKind::identity}},
                        {DenseMatrix(1, 1, Vector{1e308}), Vector{0.0}, {ActivationKind::identity}}});
  EXPECT_THROW(forward(net, Vector{10.0}), NumericError);
}

TEST(Vjp, MatchesFiniteDifferencesOnRandomNets) {
  RngStream s(101, 0);
  for (int trial = 0; trial < 40; ++trial) {
    const auto net = testutil::random_net(s, 4, 12);
    const auto z = sample_gaussian(s, net.input_dim(), 0.0, 1.0);
    const auto c = sample_gaussian(s, net.output_dim(), 0.0, 1.0);
    const auto got = vjp(net, z, c);
    const auto want = testutil::numeric_gradient([&](const Vector& u) { return dot(c, forward(net, u)); }, z);
    for (std::size_t i = 0; i < z.size(); ++i)
      EXPECT_TRUE(testutil::close_rel(got[i], want[i], 1e-4, 1e-6)) << "trial " << trial << " i " << i;
  }
}

TEST(Backward, ParameterGradientsMatchFiniteDifferences) {
  RngStream s(102, 0);
  auto net = testutil::random_net(s, 3, 6);
  const auto z = sample_gaussian(s, net.input_dim(), 0.0, 1.0);
  const auto c = sample_gaussian(s, net.output_dim(), 0.0, 1.0);
  ForwardTrace trace;
  forward(net, z, &trace);
  auto grads = MlpGradients::zeros_like(net);
  backward(net, trace, c, &grads);
  for (std::size_t l = 0; l < net.depth(); ++l) {
    auto& W = net.layer(l).W;
    for (std::size_t k = 0; k < W.size(); ++k) {
      const double keep = W.entries()[k];
      W.entries()[k] = keep + 1e-5;
      const double up = dot(c, forward(net, z));
      W.entries()[k] = keep - 1e-5;
      const double down = dot(c, forward(net, z));
      W.entries()[k] = keep;
      EXPECT_TRUE(testutil::close_rel(grads.dW[l].entries()[k], (up - down) / 2e-5, 1e-4, 1e-6));
    }
    auto& b = net.layer(l).b;
    for (std::size_t k = 0; k < b.size(); ++k) {
      const double keep = b[k];
      b[k] = keep + 1e-5;
      const double up = dot(c, forward(net, z));
      b[k] = keep - 1e-5;
      const double down = dot(c, forward(net, z));
      b[k] = keep;
      EXPECT_TRUE(testutil::close_rel(grads.db[l][k], (up - down) / 2e-5, 1e-4, 1e-6));
    }
  }
}

TEST(LipschitzBound, HandValue) {
  // widths 3 -> 4 -> 2, w_max 0.5, L = 1: (1 * 4 * 0.5)^2 = 4
  const MlpNetwork net({{DenseMatrix(4, 3, 0.5), Vector(4, 0.0), {ActivationKind::relu}},
                        {DenseMatrix(2, 4, -0.25), Vector(2, 0.0), {ActivationKind::tanh}}});
  EXPECT_DOUBLE_EQ(lipschitz_bound(net), 4.0);
}

TEST(LipschitzBound, NeverViolatedBySampledPairs) {
  RngStream s(103, 0);
  for (int n = 0; n < 10; ++n) {
    const auto net = testutil::random_net(s, 4, 10);
    const double bound = lipschitz_bound(net);
    for (int p = 0; p < 200; ++p) {
      const auto a = sample_gaussian(s, net.input_dim(), 0.0, 1.0);
      const auto b = sample_gaussian(s, net.input_dim(), 0.0, 1.0);
      Vector dz(a.size()), dg;
      for (std::size_t i = 0; i < a.size(); ++i) dz[i] = a[i] - b[i];
      const auto ga = forward(net, a), gb = forward(net, b);
      for (std::size_t i = 0; i < ga.size(); ++i) dg.push_back(ga[i] - gb[i]);
      EXPECT_LE(norm2(dg), bound * norm2(dz) * (1.0 + 1e-12));
    }
  }
}

TEST(ModelFile, RoundTripIsBitExact) {
  RngStream s(104, 0);
  const auto net = testutil::random_net(s, 4, 9);
  const auto dir = testutil::scratch_dir("model_roundtrip");
  const auto path = (dir / "m.json").string();
  save_model(net, path);
  const auto back = load_model(path);
  ASSERT_EQ(back.depth(), net.depth());
  for (std::size_t l = 0; l < net.depth(); ++l) {
    EXPECT_EQ(back.layers()[l].W, net.layers()[l].W);
    EXPECT_EQ(back.layers()[l].b, net.layers()[l].b);
    EXPECT_EQ(back.layers()[l].act, net.layers()[l].act);
  }
}

TEST(ModelFile, ErrorsNameTheField) {
  auto doc = network_to_json(hand_net());
  doc["layers"][1]["activation"] = "swish";
  try {
    network_from_json(doc);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("layers[1].activation"), std::string::npos) << e.what();
  }
  auto short_w = network_to_json(hand_net());
  short_w["layers"][0]["W"].erase(0);
  EXPECT_THROW(network_from_json(short_w), ParseError);

  const auto dir = testutil::scratch_dir("model_bad");
  const auto path = (dir / "bad.json").string();
  std::ofstream(path) << "{ \"s\": 2,\n  \"layers\": [ }";
  EXPECT_THROW(load_model(path), ParseError);
  EXPECT_THROW(load_model((dir / "missing.json").string()), ParseError);
}
