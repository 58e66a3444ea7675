#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>

#include "slt/error.hpp"
#include "slt/network.hpp"

namespace slt {

enum class LrSchedule { constant, cosine };

struct SgdConfig {
  double learning_rate = 0.1;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  LrSchedule schedule = LrSchedule::cosine;
  /// Length of the cosine period in optimizer steps.
  std::size_t total_steps = 1;
  std::size_t batch_size = 32;

  void validate() const {
    detail::require_config(learning_rate > 0.0, "learning rate must be positive");
    detail::require_config(momentum >= 0.0 && momentum < 1.0, "momentum must lie in [0, 1)");
    detail::require_config(weight_decay >= 0.0, "weight decay must be non-negative");
    detail::require_config(batch_size >= 1, "batch size must be >= 1");
    detail::require_config(schedule == LrSchedule::constant || total_steps >= 1,
                           "cosine schedule needs total_steps >= 1");
  }
};

inline double learning_rate_at(const SgdConfig& cfg, std::size_t step) {
  if (cfg.schedule == LrSchedule::constant) return cfg.learning_rate;
  const double t = static_cast<double>(step) / static_cast<double>(cfg.total_steps);
  return cfg.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * t));
}

/// Momentum buffers, one per parameter.
struct SgdState {
  ParameterTensors velocity;
  bool initialized = false;
};

/// v <- m v + g + wd theta;  theta <- theta - lr(step) v.
inline void sgd_step(ParameterTensors& params, const ParameterTensors& grads, SgdState& state,
                     const SgdConfig& cfg, std::size_t step) {
  detail::require_shape(params.same_shape(grads), "gradient shapes differ from parameters");
  if (!state.initialized) {
    state.velocity = params;
    for (auto& w : state.velocity.weights) w.setZero();
    for (auto& b : state.velocity.biases) b.setZero();
    state.initialized = true;
  }
  detail::require_shape(params.same_shape(state.velocity), "optimizer state shape mismatch");
  const double lr = learning_rate_at(cfg, step);
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    auto& vw = state.velocity.weights[l];
    vw = cfg.momentum * vw + grads.weights[l] + cfg.weight_decay * params.weights[l];
    params.weights[l] -= lr * vw;
    auto& vb = state.velocity.biases[l];
    vb = cfg.momentum * vb + grads.biases[l] + cfg.weight_decay * params.biases[l];
    params.biases[l] -= lr * vb;
  }
}

}  // namespace slt
