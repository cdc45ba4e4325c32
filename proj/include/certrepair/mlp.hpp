#pragma once

#include <atomic>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "certrepair/dense_array.hpp"
#include "certrepair/random.hpp"

namespace certrepair {

enum class HiddenActivation { tanh, relu };

/// `non_negative` squares the last pre-activation, which can reach exactly zero.
enum class OutputTransform { identity, non_negative };

class Mlp;

/// Per-layer values recorded by `forward`, tied to the parameter version that produced them.
struct ForwardCache {
  std::uint64_t stamp = 0;
  std::vector<std::vector<double>> layer_inputs;  // a_l fed into layer l
  std::vector<std::vector<double>> pre_activations;  // z_l = W_l a_l + b_l
};

struct ForwardResult {
  std::vector<double> output;
  ForwardCache cache;
};

/// Gradients with the same layout as the network parameters.
struct MlpGradients {
  std::vector<DenseArray> weights;
  std::vector<DenseArray> biases;

  static MlpGradients zeros_like(const Mlp& net);

  void scale(double s) {
    for (auto& w : weights) for (auto& v : w.raw()) v *= s;
    for (auto& b : biases) for (auto& v : b.raw()) v *= s;
  }

  void add(const MlpGradients& other, double s = 1.0) {
    for (std::size_t l = 0; l < weights.size(); ++l) {
      for (std::size_t i = 0; i < weights[l].size(); ++i) weights[l][i] += s * other.weights[l][i];
      for (std::size_t i = 0; i < biases[l].size(); ++i) biases[l][i] += s * other.biases[l][i];
    }
  }

  /// Parameter arrays in optimizer order: W0, b0, W1, b1, ...
  std::vector<const DenseArray*> arrays() const {
    std::vector<const DenseArray*> out;
    for (std::size_t l = 0; l < weights.size(); ++l) {
      out.push_back(&weights[l]);
      out.push_back(&biases[l]);
    }
    return out;
  }
};

struct BackwardResult {
  MlpGradients params;
  std::vector<double> input_grad;
};

/// Dense feed-forward network. Weight l has shape (dims[l+1], dims[l]).
class Mlp {
 public:
  Mlp() = default;

  Mlp(std::vector<std::size_t> layer_dims, HiddenActivation hidden, OutputTransform out)
      : dims_(std::move(layer_dims)), hidden_(hidden), transform_(out), stamp_(fresh_stamp()) {
    if (dims_.size() < 2) throw std::invalid_argument("Mlp: need at least input and output dims");
    for (auto d : dims_) {
      if (d == 0) throw std::invalid_argument("Mlp: layer dims must be positive");
    }
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      weights_.emplace_back(std::vector<std::size_t>{dims_[l + 1], dims_[l]});
      biases_.emplace_back(std::vector<std::size_t>{dims_[l + 1]});
    }
  }

  /// Uniform weights and biases in +-1/sqrt(fan_in).
  static Mlp random(std::vector<std::size_t> layer_dims, HiddenActivation hidden, OutputTransform out,
                    Rng& rng) {
    Mlp net(std::move(layer_dims), hidden, out);
    for (std::size_t l = 0; l < net.weights_.size(); ++l) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(net.dims_[l]));
      for (auto& v : net.weights_[l].raw()) v = rng.uniform(-bound, bound);
      for (auto& v : net.biases_[l].raw()) v = rng.uniform(-bound, bound);
    }
    return net;
  }

  const std::vector<std::size_t>& layer_dims() const { return dims_; }
  std::size_t num_layers() const { return weights_.size(); }
  std::size_t input_dim() const { return dims_.front(); }
  std::size_t output_dim() const { return dims_.back(); }
  HiddenActivation hidden_activation() const { return hidden_; }
  OutputTransform output_transform() const { return transform_; }

  const DenseArray& weight(std::size_t l) const { return weights_[l]; }
  const DenseArray& bias(std::size_t l) const { return biases_[l]; }

  /// Mutable access invalidates every cache produced before the call.
  DenseArray& weight_mut(std::size_t l) {
    stamp_ = fresh_stamp();
    return weights_[l];
  }
  DenseArray& bias_mut(std::size_t l) {
    stamp_ = fresh_stamp();
    return biases_[l];
  }

  std::vector<DenseArray*> mutable_parameters() {
    stamp_ = fresh_stamp();
    std::vector<DenseArray*> out;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
      out.push_back(&weights_[l]);
      out.push_back(&biases_[l]);
    }
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) n += weights_[l].size() + biases_[l].size();
    return n;
  }

  std::uint64_t stamp() const { return stamp_; }

  /// Parameter equality; the version stamp is ignored.
  friend bool operator==(const Mlp& a, const Mlp& b) {
    return a.dims_ == b.dims_ && a.hidden_ == b.hidden_ && a.transform_ == b.transform_ &&
           a.weights_ == b.weights_ && a.biases_ == b.biases_;
  }

 private:
  static std::uint64_t fresh_stamp() {
    static std::atomic<std::uint64_t> counter{1};
    return counter.fetch_add(1, std::memory_order_relaxed);
  }

  std::vector<std::size_t> dims_;
  HiddenActivation hidden_ = HiddenActivation::tanh;
  OutputTransform transform_ = OutputTransform::identity;
  std::vector<DenseArray> weights_;
  std::vector<DenseArray> biases_;
  std::uint64_t stamp_ = 0;
};

inline MlpGradients MlpGradients::zeros_like(const Mlp& net) {
  MlpGradients g;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    g.weights.emplace_back(net.weight(l).shape());
    g.biases.emplace_back(net.bias(l).shape());
  }
  return g;
}

namespace detail {

inline double activate(HiddenActivation a, double z) {
  return a == HiddenActivation::tanh ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}

inline double activate_derivative(HiddenActivation a, double z) {
  if (a == HiddenActivation::tanh) {
    const double t = std::tanh(z);
    return 1.0 - t * t;
  }
  return z > 0.0 ? 1.0 : 0.0;
}

inline void check_input(const Mlp& net, std::span<const double> input) {
  if (input.size() != net.input_dim()) {
    throw std::invalid_argument("Mlp input has length " + std::to_string(input.size()) + ", expected " +
                                std::to_string(net.input_dim()));
  }
}

inline void affine(const DenseArray& w, const DenseArray& b, std::span<const double> x,
                   std::vector<double>& z) {
  const std::size_t rows = w.rows();
  const std::size_t cols = w.cols();
  z.resize(rows);
  const double* wp = w.raw().data();
  for (std::size_t r = 0; r < rows; ++r) {
    double acc = b[r];
    const double* row = wp + r * cols;
    for (std::size_t c = 0; c < cols; ++c) acc += row[c] * x[c];
    z[r] = acc;
  }
}

}  // namespace detail

inline ForwardResult forward(const Mlp& net, std::span<const double> input) {
  detail::check_input(net, input);
  ForwardResult res;
  auto& cache = res.cache;
  cache.stamp = net.stamp();
  const std::size_t layers = net.num_layers();
  cache.layer_inputs.resize(layers);
  cache.pre_activations.resize(layers);
  cache.layer_inputs[0].assign(input.begin(), input.end());
  for (std::size_t l = 0; l < layers; ++l) {
    auto& z = cache.pre_activations[l];
    detail::affine(net.weight(l), net.bias(l), cache.layer_inputs[l], z);
    if (l + 1 < layers) {
      auto& next = cache.layer_inputs[l + 1];
      next.resize(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) next[i] = detail::activate(net.hidden_activation(), z[i]);
    }
  }
  const auto& last = cache.pre_activations.back();
  res.output = last;
  if (net.output_transform() == OutputTransform::non_negative) {
    for (auto& v : res.output) v = v * v;
  }
  return res;
}

/// Forward pass without keeping the cache.
inline std::vector<double> evaluate(const Mlp& net, std::span<const double> input) {
  detail::check_input(net, input);
  std::vector<double> a(input.begin(), input.end());
  std::vector<double> z;
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    detail::affine(net.weight(l), net.bias(l), a, z);
    if (l + 1 < net.num_layers()) {
      for (auto& v : z) v = detail::activate(net.hidden_activation(), v);
    }
    a.swap(z);
  }
  if (net.output_transform() == OutputTransform::non_negative) {
    for (auto& v : a) v = v * v;
  }
  return a;
}

inline double evaluate_scalar(const Mlp& net, std::span<const double> input) { return evaluate(net, input)[0]; }

/// Back-propagates `output_grad` (dL/doutput). Adds parameter gradients into `acc`
/// when it is non-null and returns dL/dinput.
inline std::vector<double> backward_accumulate(const Mlp& net, const ForwardCache& cache,
                                               std::span<const double> output_grad, MlpGradients* acc) {
  if (cache.stamp != net.stamp()) {
    throw std::logic_error("Mlp backward: cache was produced by a different parameter version");
  }
  if (output_grad.size() != net.output_dim()) {
    throw std::invalid_argument("Mlp backward: output gradient has wrong length");
  }
  const std::size_t layers = net.num_layers();
  std::vector<double> delta(output_grad.begin(), output_grad.end());
  if (net.output_transform() == OutputTransform::non_negative) {
    const auto& z = cache.pre_activations.back();
    for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= 2.0 * z[i];
  }
  std::vector<double> prev;
  for (std::size_t l = layers; l-- > 0;) {
    const DenseArray& w = net.weight(l);
    const std::size_t rows = w.rows();
    const std::size_t cols = w.cols();
    const auto& a = cache.layer_inputs[l];
    if (acc != nullptr) {
      double* gw = acc->weights[l].raw().data();
      for (std::size_t r = 0; r < rows; ++r) {
        const double d = delta[r];
        if (d == 0.0) continue;
        double* row = gw + r * cols;
        for (std::size_t c = 0; c < cols; ++c) row[c] += d * a[c];
        acc->biases[l][r] += d;
      }
    }
    prev.assign(cols, 0.0);
    const double* wp = w.raw().data();
    for (std::size_t r = 0; r < rows; ++r) {
      const double d = delta[r];
      if (d == 0.0) continue;
      const double* row = wp + r * cols;
      for (std::size_t c = 0; c < cols; ++c) prev[c] += row[c] * d;
    }
    if (l > 0) {
      const auto& z = cache.pre_activations[l - 1];
      for (std::size_t c = 0; c < cols; ++c) prev[c] *= detail::activate_derivative(net.hidden_activation(), z[c]);
    }
    delta.swap(prev);
  }
  return delta;
}

inline BackwardResult backward(const Mlp& net, const ForwardCache& cache, std::span<const double> output_grad) {
  BackwardResult res;
  res.params = MlpGradients::zeros_like(net);
  res.input_grad = backward_accumulate(net, cache, output_grad, &res.params);
  return res;
}

inline std::vector<double> input_gradient(const Mlp& net, const ForwardCache& cache,
                                          std::span<const double> output_grad) {
  return backward_accumulate(net, cache, output_grad, nullptr);
}

// ---------------------------------------------------------------------------
// JSON model files

inline std::string to_string(HiddenActivation a) { return a == HiddenActivation::tanh ? "tanh" : "relu"; }
inline std::string to_string(OutputTransform t) {
  return t == OutputTransform::identity ? "identity" : "non_negative";
}

inline HiddenActivation parse_activation(const std::string& s) {
  if (s == "tanh") return HiddenActivation::tanh;
  if (s == "relu") return HiddenActivation::relu;
  throw std::invalid_argument("unknown hidden_activation '" + s + "'");
}

inline OutputTransform parse_output_transform(const std::string& s) {
  if (s == "identity") return OutputTransform::identity;
  if (s == "non_negative") return OutputTransform::non_negative;
  throw std::invalid_argument("unknown output_transform '" + s + "'");
}

inline nlohmann::json to_json(const Mlp& net) {
  nlohmann::json j;
  j["layer_dims"] = net.layer_dims();
  j["hidden_activation"] = to_string(net.hidden_activation());
  j["output_transform"] = to_string(net.output_transform());
  auto weights = nlohmann::json::array();
  auto biases = nlohmann::json::array();
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    weights.push_back(net.weight(l).raw());
    biases.push_back(net.bias(l).raw());
  }
  j["weights"] = std::move(weights);
  j["biases"] = std::move(biases);
  return j;
}

inline Mlp mlp_from_json(const nlohmann::json& j) {
  auto dims = j.at("layer_dims").get<std::vector<std::size_t>>();
  Mlp net(dims, parse_activation(j.at("hidden_activation").get<std::string>()),
          parse_output_transform(j.at("output_transform").get<std::string>()));
  const auto& weights = j.at("weights");
  const auto& biases = j.at("biases");
  if (weights.size() != net.num_layers() || biases.size() != net.num_layers()) {
    throw std::invalid_argument("model file: layer count does not match layer_dims");
  }
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    auto w = weights[l].get<std::vector<double>>();
    auto b = biases[l].get<std::vector<double>>();
    net.weight_mut(l) = DenseArray(net.weight(l).shape(), std::move(w));
    net.bias_mut(l) = DenseArray(net.bias(l).shape(), std::move(b));
  }
  return net;
}

}  // namespace certrepair
