#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "certrepair/dense_array.hpp"
#include "certrepair/mlp.hpp"

namespace certrepair {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t step_count = 0;
  std::vector<DenseArray> first_moment;
  std::vector<DenseArray> second_moment;

  AdamState() = default;
  explicit AdamState(double learning_rate) : lr(learning_rate) {}
};

/// Bias-corrected Adam update in place. Moments are created lazily on the first call.
inline void adam_step(std::span<DenseArray* const> params, std::span<const DenseArray* const> grads,
                      AdamState& state) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: parameter/gradient count mismatch");
  if (state.first_moment.empty()) {
    for (const DenseArray* p : params) {
      state.first_moment.emplace_back(p->shape());
      state.second_moment.emplace_back(p->shape());
    }
  }
  if (state.first_moment.size() != params.size()) throw std::invalid_argument("adam_step: moment count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i]->same_shape(*grads[i]) || !params[i]->same_shape(state.first_moment[i])) {
      throw std::invalid_argument("adam_step: shape mismatch");
    }
  }
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i]->raw();
    const auto& g = grads[i]->raw();
    auto& m = state.first_moment[i].raw();
    auto& v = state.second_moment[i].raw();
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = state.beta1 * m[k] + (1.0 - state.beta1) * g[k];
      v[k] = state.beta2 * v[k] + (1.0 - state.beta2) * g[k] * g[k];
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      p[k] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

inline void adam_step(Mlp& net, const MlpGradients& grads, AdamState& state) {
  auto params = net.mutable_parameters();
  auto g = grads.arrays();
  adam_step(std::span<DenseArray* const>(params), std::span<const DenseArray* const>(g), state);
}

}  // namespace certrepair
