#include "saliq/quant.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "saliq/model.hpp"

namespace saliq {

void validate_bits(int bits) {
  if (bits < 2 || bits > 8) {
    throw std::invalid_argument("bit-width must be in [2, 8], got " + std::to_string(bits));
  }
}

namespace {

void validate_alpha(float alpha) {
  if (!(alpha > 0.0f)) {
    throw std::invalid_argument("PACT clip alpha must be positive, got " + std::to_string(alpha));
  }
}

}  // namespace

Tensor pact_forward(const Tensor& x, float alpha) {
  validate_alpha(alpha);
  Tensor out(x.shape());
  const int64_t n = x.numel();
  const float* in = x.data();
  float* o = out.data();
  for (int64_t i = 0; i < n; ++i) {
    float v = in[i];
    if (v < 0.0f) v = 0.0f;
    if (v >= alpha) v = alpha;
    o[i] = v;
  }
  return out;
}

float pact_quantize_value(float y, float alpha, int bits) {
  const double levels = static_cast<double>((1 << bits) - 1);
  const double a = static_cast<double>(alpha);
  const int64_t code = std::llround(static_cast<double>(y) * levels / a);
  float q = static_cast<float>(static_cast<double>(code) * a / levels);
  if (q < 0.0f) q = 0.0f;
  if (q > alpha) q = alpha;
  return q;
}

Tensor pact_quantize(const Tensor& y, float alpha, int bits) {
  validate_alpha(alpha);
  validate_bits(bits);
  Tensor out(y.shape());
  const int64_t n = y.numel();
  const float* in = y.data();
  float* o = out.data();
  for (int64_t i = 0; i < n; ++i) o[i] = pact_quantize_value(in[i], alpha, bits);
  return out;
}

void pact_backward(const Tensor& x, float alpha, const Tensor& upstream, Tensor& dx, float& dalpha) {
  validate_alpha(alpha);
  if (!x.same_shape(upstream)) {
    throw std::invalid_argument("pact_backward: shape mismatch, x " + x.shape_str() + " vs upstream " +
                                upstream.shape_str());
  }
  const int64_t n = x.numel();
  const float* in = x.data();
  const float* up = upstream.data();
  float* o = dx.data();
  double da = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const float v = in[i];
    if (v >= alpha) {
      da += static_cast<double>(up[i]);
    } else if (v >= 0.0f) {
      o[i] += up[i];
    }
  }
  dalpha += static_cast<float>(da);
}

float weight_scale(const Tensor& w, int bits) {
  validate_bits(bits);
  float maxabs = 0.0f;
  const int64_t n = w.numel();
  const float* in = w.data();
  for (int64_t i = 0; i < n; ++i) maxabs = std::max(maxabs, std::fabs(in[i]));
  if (maxabs == 0.0f) return 0.0f;
  const double half_levels = static_cast<double>((1 << (bits - 1)) - 1);
  return static_cast<float>(static_cast<double>(maxabs) / half_levels);
}

Tensor quantize_weights_qat(const Tensor& w, int bits) {
  const float scale = weight_scale(w, bits);
  if (scale == 0.0f) return w;
  Tensor out(w.shape());
  const double s = static_cast<double>(scale);
  const int64_t n = w.numel();
  const float* in = w.data();
  float* o = out.data();
  for (int64_t i = 0; i < n; ++i) {
    // Integer code, then code * scale: the same arithmetic unpack_weights
    // uses, so values round-trip bit-exactly (and -0.0 cannot appear).
    const int64_t code = std::llround(static_cast<double>(in[i]) / s);
    o[i] = static_cast<float>(static_cast<double>(code) * s);
  }
  return out;
}

std::vector<uint8_t> pack_weights(const Tensor& w, int bits, float scale) {
  validate_bits(bits);
  const int64_t n = w.numel();
  std::vector<uint8_t> bytes(static_cast<size_t>((n * bits + 7) / 8), 0);
  const uint32_t mask = (1u << bits) - 1u;
  const double s = static_cast<double>(scale);
  const int64_t half = (1 << (bits - 1)) - 1;
  for (int64_t i = 0; i < n; ++i) {
    int64_t code = 0;
    if (scale != 0.0f) {
      const double ratio = static_cast<double>(w[i]) / s;
      code = static_cast<int64_t>(std::llround(ratio));
      // Grid membership within 1e-6, relative so that float32 rounding of
      // code * scale still qualifies at large code magnitudes.
      if (std::fabs(static_cast<double>(w[i]) - static_cast<double>(code) * s) >
          1e-6 * std::max(1.0, std::fabs(static_cast<double>(w[i])))) {
        throw std::invalid_argument("pack_weights: value " + std::to_string(w[i]) +
                                    " is not on the quantization grid (scale " + std::to_string(scale) + ")");
      }
    } else if (w[i] != 0.0f) {
      throw std::invalid_argument("pack_weights: nonzero value with zero scale");
    }
    if (code < -half || code > half) {
      throw std::invalid_argument("pack_weights: code " + std::to_string(code) + " out of range for " +
                                  std::to_string(bits) + " bits");
    }
    const uint32_t u = static_cast<uint32_t>(code) & mask;
    const int64_t bit = i * bits;
    const int64_t byte = bit / 8;
    const int off = static_cast<int>(bit % 8);
    bytes[static_cast<size_t>(byte)] |= static_cast<uint8_t>(u << off);
    if (off + bits > 8) {
      bytes[static_cast<size_t>(byte + 1)] |= static_cast<uint8_t>(u >> (8 - off));
    }
  }
  return bytes;
}

Model quantize_weights_ptq(const Model& model, int bits) {
  validate_bits(bits);
  Model out = model;
  for (Layer& layer : out.layers()) {
    if (layer.kind == LayerKind::kConv || layer.kind == LayerKind::kDense) {
      layer.weight = quantize_weights_qat(layer.weight, bits);
    }
  }
  out.quant_spec() = QuantSpec{bits, true};
  return out;
}

Tensor unpack_weights(const std::vector<uint8_t>& bytes, const std::vector<int>& shape, int bits, float scale) {
  validate_bits(bits);
  Tensor out(shape);
  const int64_t n = out.numel();
  if (static_cast<int64_t>(bytes.size()) < (n * bits + 7) / 8) {
    throw std::invalid_argument("unpack_weights: byte buffer too short for shape " + shape_to_string(shape));
  }
  const uint32_t mask = (1u << bits) - 1u;
  const uint32_t sign_bit = 1u << (bits - 1);
  const double s = static_cast<double>(scale);
  for (int64_t i = 0; i < n; ++i) {
    const int64_t bit = i * bits;
    const int64_t byte = bit / 8;
    const int off = static_cast<int>(bit % 8);
    uint32_t u = static_cast<uint32_t>(bytes[static_cast<size_t>(byte)]) >> off;
    if (off + bits > 8) {
      u |= static_cast<uint32_t>(bytes[static_cast<size_t>(byte + 1)]) << (8 - off);
    }
    u &= mask;
    const int64_t code = (u & sign_bit) ? static_cast<int64_t>(u) - (1 << bits) : static_cast<int64_t>(u);
    out[i] = static_cast<float>(static_cast<double>(code) * s);
  }
  return out;
}

}  // namespace saliq
