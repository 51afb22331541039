#pragma once

// Feedforward generator networks: forward map, closed-form reverse mode,
// Lipschitz bound and the JSON model file.

#include <algorithm>
#include <cmath>
#include <fstream>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "onebit/core.hpp"

namespace onebit {

enum class ActivationKind { relu, sigmoid, tanh, identity };

struct Activation {
  ActivationKind kind = ActivationKind::identity;

  /// Every supported kind is 1-Lipschitz.
  constexpr double lipschitz() const noexcept { return 1.0; }

  std::string_view name() const noexcept {
    switch (kind) {
      case ActivationKind::relu: return "relu";
      case ActivationKind::sigmoid: return "sigmoid";
      case ActivationKind::tanh: return "tanh";
      case ActivationKind::identity: return "identity";
    }
    return "identity";
  }

  static std::optional<Activation> from_name(std::string_view name) {
    if (name == "relu") return Activation{ActivationKind::relu};
    if (name == "sigmoid") return Activation{ActivationKind::sigmoid};
    if (name == "tanh") return Activation{ActivationKind::tanh};
    if (name == "identity") return Activation{ActivationKind::identity};
    return std::nullopt;
  }

  double apply(double pre) const noexcept {
    switch (kind) {
      case ActivationKind::relu: return pre > 0.0 ? pre : 0.0;
      case ActivationKind::sigmoid: return 1.0 / (1.0 + std::exp(-pre));
      case ActivationKind::tanh: return std::tanh(pre);
      case ActivationKind::identity: return pre;
    }
    return pre;
  }

  /// Derivative given the pre-activation and the activation output.
  /// relu'(0) is taken as 0.
  double derivative(double pre, double out) const noexcept {
    switch (kind) {
      case ActivationKind::relu: return pre > 0.0 ? 1.0 : 0.0;
      case ActivationKind::sigmoid: return out * (1.0 - out);
      case ActivationKind::tanh: return 1.0 - out * out;
      case ActivationKind::identity: return 1.0;
    }
    return 1.0;
  }

  bool operator==(const Activation&) const = default;
};

/// out = act(W in + b), W is (out_dim x in_dim).
struct MlpLayer {
  DenseMatrix W;
  Vector b;
  Activation act;

  std::size_t in_dim() const noexcept { return W.cols(); }
  std::size_t out_dim() const noexcept { return W.rows(); }
};

/// A feedforward network of affine layers with elementwise activations.
///
/// Used both as the generator G: R^s -> R^n and (in training) as the encoder.
/// Dimensions must chain; a latent smaller than the output is typical for a
/// generator but not enforced (identity generators with s = n are useful in
/// tests).
class MlpNetwork {
 public:
  MlpNetwork() = default;
  explicit MlpNetwork(std::vector<MlpLayer> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) throw std::invalid_argument("MlpNetwork: needs at least one layer");
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      const auto& layer = layers_[i];
      if (layer.W.rows() == 0 || layer.W.cols() == 0)
        throw std::invalid_argument("MlpNetwork: layer " + std::to_string(i) + " has an empty weight matrix");
      if (layer.b.size() != layer.W.rows())
        throw std::invalid_argument("MlpNetwork: layer " + std::to_string(i) + " bias has " +
                                    std::to_string(layer.b.size()) + " entries, expected " +
                                    std::to_string(layer.W.rows()));
      if (i > 0 && layer.W.cols() != layers_[i - 1].W.rows())
        throw std::invalid_argument("MlpNetwork: layer " + std::to_string(i) + " input dim " +
                                    std::to_string(layer.W.cols()) + " does not match previous output dim " +
                                    std::to_string(layers_[i - 1].W.rows()));
    }
  }

  std::size_t input_dim() const noexcept { return layers_.empty() ? 0 : layers_.front().in_dim(); }
  std::size_t output_dim() const noexcept { return layers_.empty() ? 0 : layers_.back().out_dim(); }
  std::size_t depth() const noexcept { return layers_.size(); }

  const std::vector<MlpLayer>& layers() const noexcept { return layers_; }
  /// Mutable parameter access for the optimizer. Shapes must not change.
  MlpLayer& layer(std::size_t i) { return layers_.at(i); }

  /// Widest layer including the input, i.e. max_i N_i for i = 0..d.
  std::size_t max_width() const noexcept {
    std::size_t width = input_dim();
    for (const auto& layer : layers_) width = std::max(width, layer.out_dim());
    return width;
  }

  double max_abs_weight() const noexcept {
    double w = 0.0;
    for (const auto& layer : layers_)
      for (double v : layer.W.entries()) w = std::max(w, std::abs(v));
    return w;
  }

  double max_lipschitz() const noexcept {
    double l = 0.0;
    for (const auto& layer : layers_) l = std::max(l, layer.act.lipschitz());
    return l;
  }

 private:
  std::vector<MlpLayer> layers_;
};

using MlpGenerator = MlpNetwork;

/// Per-layer values cached by a forward pass for the backward pass.
struct ForwardTrace {
  std::vector<Vector> inputs;  // input to layer i
  std::vector<Vector> pre;     // W x + b of layer i
  std::vector<Vector> post;    // act(pre) of layer i
};

/// Parameter-shaped gradient buffers.
struct MlpGradients {
  std::vector<DenseMatrix> dW;
  std::vector<Vector> db;

  static MlpGradients zeros_like(const MlpNetwork& net) {
    MlpGradients g;
    for (const auto& layer : net.layers()) {
      g.dW.emplace_back(layer.W.rows(), layer.W.cols());
      g.db.emplace_back(layer.b.size(), 0.0);
    }
    return g;
  }
};

inline Vector forward(const MlpNetwork& net, std::span<const double> z, ForwardTrace* trace = nullptr) {
  if (z.size() != net.input_dim())
    throw std::invalid_argument("forward: latent has " + std::to_string(z.size()) + " entries, network expects " +
                                std::to_string(net.input_dim()));
  if (trace) {
    trace->inputs.clear();
    trace->pre.clear();
    trace->post.clear();
  }
  Vector x(z.begin(), z.end());
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const auto& layer = net.layers()[i];
    Vector pre = matvec(layer.W, x);
    for (std::size_t r = 0; r < pre.size(); ++r) pre[r] += layer.b[r];
    Vector post(pre.size());
    for (std::size_t r = 0; r < pre.size(); ++r) post[r] = layer.act.apply(pre[r]);
    if (!all_finite(post)) throw NumericError("forward: non-finite activation in layer " + std::to_string(i));
    if (trace) {
      trace->inputs.push_back(std::move(x));
      trace->pre.push_back(std::move(pre));
      trace->post.push_back(post);
    }
    x = std::move(post);
  }
  return x;
}

/// Backpropagates `cotangent` (dL/d output) through a recorded forward pass.
/// Returns dL/d input; when `grads` is given, parameter gradients are added to it.
inline Vector backward(const MlpNetwork& net, const ForwardTrace& trace, std::span<const double> cotangent,
                       MlpGradients* grads = nullptr) {
  if (cotangent.size() != net.output_dim())
    throw std::invalid_argument("backward: cotangent has " + std::to_string(cotangent.size()) +
                                " entries, network output has " + std::to_string(net.output_dim()));
  if (trace.pre.size() != net.depth()) throw std::invalid_argument("backward: trace does not match network");
  Vector delta(cotangent.begin(), cotangent.end());
  for (std::size_t li = net.depth(); li-- > 0;) {
    const auto& layer = net.layers()[li];
    const auto& pre = trace.pre[li];
    const auto& post = trace.post[li];
    for (std::size_t r = 0; r < delta.size(); ++r) delta[r] *= layer.act.derivative(pre[r], post[r]);
    if (grads) {
      const auto& in = trace.inputs[li];
      auto& dW = grads->dW[li];
      auto& db = grads->db[li];
      for (std::size_t r = 0; r < delta.size(); ++r) {
        db[r] += delta[r];
        if (delta[r] == 0.0) continue;
        auto row = dW.row(r);
        for (std::size_t c = 0; c < in.size(); ++c) row[c] += delta[r] * in[c];
      }
    }
    delta = matvec_t(layer.W, delta);
  }
  return delta;
}

/// J_G(z)ᵀ cotangent.
inline Vector vjp(const MlpNetwork& net, std::span<const double> z, std::span<const double> cotangent) {
  if (cotangent.size() != net.output_dim())
    throw std::invalid_argument("vjp: cotangent has " + std::to_string(cotangent.size()) +
                                " entries, network output has " + std::to_string(net.output_dim()));
  ForwardTrace trace;
  forward(net, z, &trace);
  return backward(net, trace, cotangent);
}

/// (L N w_max)^d with N the widest layer (input included), w_max the largest
/// absolute weight and L the largest activation Lipschitz constant.
inline double lipschitz_bound(const MlpNetwork& net) {
  const double per_layer =
      net.max_lipschitz() * static_cast<double>(net.max_width()) * net.max_abs_weight();
  return std::pow(per_layer, static_cast<double>(net.depth()));
}

// ---- model file ------------------------------------------------------------

inline nlohmann::json network_to_json(const MlpNetwork& net) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& layer : net.layers()) {
    layers.push_back({{"rows", layer.W.rows()},
                      {"cols", layer.W.cols()},
                      {"activation", std::string(layer.act.name())},
                      {"W", std::vector<double>(layer.W.entries().begin(), layer.W.entries().end())},
                      {"b", layer.b}});
  }
  return {{"format_version", 1}, {"s", net.input_dim()}, {"n", net.output_dim()}, {"layers", layers}};
}

namespace detail {

inline const nlohmann::json& require_field(const nlohmann::json& obj, const std::string& key, const std::string& where) {
  if (!obj.is_object()) throw ParseError(where + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ParseError(where + ": missing field '" + key + "'");
  return *it;
}

inline std::size_t require_count(const nlohmann::json& obj, const std::string& key, const std::string& where) {
  const auto& v = require_field(obj, key, where);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
    throw ParseError(where + "." + key + ": expected a non-negative integer");
  return v.get<std::size_t>();
}

inline Vector require_numbers(const nlohmann::json& obj, const std::string& key, const std::string& where) {
  const auto& v = require_field(obj, key, where);
  if (!v.is_array()) throw ParseError(where + "." + key + ": expected a number array");
  Vector out;
  out.reserve(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (!v[i].is_number()) throw ParseError(where + "." + key + "[" + std::to_string(i) + "]: expected a number");
    const double d = v[i].get<double>();
    if (!std::isfinite(d)) throw ParseError(where + "." + key + "[" + std::to_string(i) + "]: non-finite value");
    out.push_back(d);
  }
  return out;
}

inline nlohmann::json parse_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError(path + ": cannot open file");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

inline void write_json_file(const std::string& path, const nlohmann::json& doc) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path + ": cannot open file for writing");
  out << doc.dump(1) << '\n';
  if (!out) throw std::runtime_error(path + ": write failed");
}

}  // namespace detail

inline MlpNetwork network_from_json(const nlohmann::json& doc, const std::string& where = "model") {
  const auto version = detail::require_count(doc, "format_version", where);
  if (version != 1) throw ParseError(where + ".format_version: unsupported version " + std::to_string(version));
  const auto s = detail::require_count(doc, "s", where);
  const auto n = detail::require_count(doc, "n", where);
  const auto& layers_json = detail::require_field(doc, "layers", where);
  if (!layers_json.is_array() || layers_json.empty()) throw ParseError(where + ".layers: expected a non-empty array");

  std::vector<MlpLayer> layers;
  std::size_t expected_in = s;
  for (std::size_t i = 0; i < layers_json.size(); ++i) {
    const std::string at = where + ".layers[" + std::to_string(i) + "]";
    const auto& lj = layers_json[i];
    const auto rows = detail::require_count(lj, "rows", at);
    const auto cols = detail::require_count(lj, "cols", at);
    const auto& act_json = detail::require_field(lj, "activation", at);
    if (!act_json.is_string()) throw ParseError(at + ".activation: expected a string");
    const auto act = Activation::from_name(act_json.get<std::string>());
    if (!act) throw ParseError(at + ".activation: unknown activation '" + act_json.get<std::string>() + "'");
    auto W = detail::require_numbers(lj, "W", at);
    auto b = detail::require_numbers(lj, "b", at);
    if (rows == 0 || cols == 0) throw ParseError(at + ": rows and cols must be positive");
    if (cols != expected_in)
      throw ParseError(at + ".cols: " + std::to_string(cols) + " does not match incoming dimension " +
                       std::to_string(expected_in));
    if (W.size() != rows * cols)
      throw ParseError(at + ".W: has " + std::to_string(W.size()) + " entries, expected rows*cols = " +
                       std::to_string(rows * cols));
    if (b.size() != rows)
      throw ParseError(at + ".b: has " + std::to_string(b.size()) + " entries, expected " + std::to_string(rows));
    layers.push_back(MlpLayer{DenseMatrix(rows, cols, std::move(W)), std::move(b), *act});
    expected_in = rows;
  }
  if (expected_in != n)
    throw ParseError(where + ".n: " + std::to_string(n) + " does not match last layer output " +
                     std::to_string(expected_in));
  return MlpNetwork(std::move(layers));
}

/// Writes the model file. nlohmann emits the shortest decimal string that
/// parses back to the identical double, so load(save(G)) is bit-exact.
inline void save_model(const MlpNetwork& net, const std::string& path) {
  detail::write_json_file(path, network_to_json(net));
}

inline MlpNetwork load_model(const std::string& path) { return network_from_json(detail::parse_json_file(path), path); }

}  // namespace onebit
