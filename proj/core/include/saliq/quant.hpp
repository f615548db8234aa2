#pragma once

#include <cstdint>
#include <vector>

#include "saliq/tensor.hpp"

namespace saliq {

/// k-bit activation/weight quantization settings. Activations get exactly 2^k
/// levels (including 0) on [0, alpha]; weights use a symmetric per-tensor grid.
struct QuantSpec {
  int bits = 8;
  bool quantize_weights = true;
};

/// Per-layer learnable clipping state.
struct PactParams {
  float alpha = 6.0f;
  float alpha_lr = 1e-2f;
  float alpha_reg = 1e-4f;
};

inline constexpr float kAlphaFloor = 1e-3f;

void validate_bits(int bits);

/// Clip to [0, alpha]: 0 below zero, identity on [0, alpha), alpha above.
Tensor pact_forward(const Tensor& x, float alpha);

/// Snap already-clipped values onto the 2^k-level grid over [0, alpha].
/// Rounding is half-away-from-zero.
Tensor pact_quantize(const Tensor& y, float alpha, int bits);
float pact_quantize_value(float y, float alpha, int bits);

/// Straight-through backward of the clipped (and possibly quantized)
/// activation: rounding is treated as identity, so the input gradient passes
/// through on 0 <= x < alpha and the clip region routes gradient to alpha.
void pact_backward(const Tensor& x, float alpha, const Tensor& upstream, Tensor& dx, float& dalpha);

/// Symmetric per-tensor scale max|w| / (2^(k-1) - 1); zero for an all-zero tensor.
float weight_scale(const Tensor& w, int bits);

/// Fake-quantize weights onto the symmetric grid (identity when the scale is
/// zero). Backward through this op is identity (straight-through).
Tensor quantize_weights_qat(const Tensor& w, int bits);

/// Pack grid-valued weights as k-bit two's-complement codes, LSB-first within
/// each byte, zero-padded final byte. Every element must sit on the grid
/// (an exact multiple of scale within 1e-6 of a code).
std::vector<uint8_t> pack_weights(const Tensor& w, int bits, float scale);
Tensor unpack_weights(const std::vector<uint8_t>& bytes, const std::vector<int>& shape, int bits, float scale);

class Model;

/// One-shot post-training quantization: every conv/dense weight tensor is
/// replaced by its symmetric k-bit values. Biases and alphas are untouched.
/// Idempotent at a fixed k.
Model quantize_weights_ptq(const Model& model, int bits);

}  // namespace saliq
