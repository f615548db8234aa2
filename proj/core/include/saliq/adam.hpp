#pragma once

#include <cstdint>
#include <vector>

#include "saliq/tensor.hpp"

namespace saliq {

/// Adam optimizer state: first/second moment per parameter plus step counter.
struct AdamState {
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
  int64_t step = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  void reset(const std::vector<Tensor*>& params);
};

/// One bias-corrected Adam update over all parameters.
void adam_step(std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads, AdamState& state, float lr);

/// Clipping-parameter update per the squared-L2 regularizer reading:
/// alpha <- max(alpha - alpha_lr * (dalpha + 2 * alpha_reg * alpha), floor).
float update_alpha(float alpha, float dalpha, float alpha_lr, float alpha_reg);

}  // namespace saliq
