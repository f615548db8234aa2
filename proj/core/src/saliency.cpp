#include "saliq/saliency.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "saliq/tape.hpp"

namespace saliq {

namespace {

Tensor input_gradient(const Model& model, const Tensor& x, const std::vector<int>& labels, bool apply_quant,
                      bool from_loss) {
  Tape tape;
  Model::TapeForward fwd = model.forward_tape(tape, x, apply_quant, /*input_requires_grad=*/true);
  const NodeId objective =
      from_loss ? tape.cross_entropy(fwd.logits, labels) : tape.pick_label_sum(fwd.logits, labels);
  tape.backward(objective);
  return tape.grad(fwd.input);
}

}  // namespace

Tensor saliency_from_loss(const Model& model, const Tensor& x, const std::vector<int>& labels, bool apply_quant) {
  return input_gradient(model, x, labels, apply_quant, true);
}

Tensor saliency_from_logit(const Model& model, const Tensor& x, const std::vector<int>& labels, bool apply_quant) {
  return input_gradient(model, x, labels, apply_quant, false);
}

std::vector<float> adaptive_threshold(const Tensor& saliency, float mask_ratio) {
  if (!(mask_ratio >= 0.0f && mask_ratio < 1.0f)) {
    throw std::invalid_argument("adaptive_threshold: mask ratio must be in [0, 1)");
  }
  const int batch = saliency.ndim() >= 1 ? saliency.dim(0) : 1;
  const int64_t per_sample = saliency.numel() / batch;
  const int64_t k = static_cast<int64_t>(std::floor(static_cast<double>(mask_ratio) * static_cast<double>(per_sample)));

  std::vector<float> eps(static_cast<size_t>(batch), -1.0f);
  if (k == 0) return eps;

  std::vector<float> mags(static_cast<size_t>(per_sample));
  for (int b = 0; b < batch; ++b) {
    const float* s = saliency.data() + static_cast<int64_t>(b) * per_sample;
    for (int64_t i = 0; i < per_sample; ++i) mags[static_cast<size_t>(i)] = std::fabs(s[i]);
    std::nth_element(mags.begin(), mags.begin() + (k - 1), mags.end());
    eps[static_cast<size_t>(b)] = mags[static_cast<size_t>(k - 1)];
  }
  return eps;
}

Tensor mask_features(const Tensor& x, const Tensor& saliency, const std::vector<float>& eps) {
  if (!x.same_shape(saliency)) {
    throw std::invalid_argument("mask_features: shape mismatch " + x.shape_str() + " vs " + saliency.shape_str());
  }
  const int batch = x.dim(0);
  if (static_cast<int>(eps.size()) != batch) {
    throw std::invalid_argument("mask_features: one threshold per sample required");
  }
  const int64_t per_sample = x.numel() / batch;
  Tensor out(x.shape());
  for (int b = 0; b < batch; ++b) {
    const float* xi = x.data() + static_cast<int64_t>(b) * per_sample;
    const float* si = saliency.data() + static_cast<int64_t>(b) * per_sample;
    float* oi = out.data() + static_cast<int64_t>(b) * per_sample;
    const float e = eps[static_cast<size_t>(b)];
    for (int64_t i = 0; i < per_sample; ++i) oi[i] = (std::fabs(si[i]) > e) ? xi[i] : 0.0f;
  }
  return out;
}

Tensor mask_bottom_fraction(const Tensor& x, const Tensor& saliency, float mask_ratio) {
  if (!x.same_shape(saliency)) {
    throw std::invalid_argument("mask_bottom_fraction: shape mismatch " + x.shape_str() + " vs " +
                                saliency.shape_str());
  }
  if (!(mask_ratio >= 0.0f && mask_ratio < 1.0f)) {
    throw std::invalid_argument("mask_bottom_fraction: mask ratio must be in [0, 1)");
  }
  const int batch = x.dim(0);
  const int64_t per_sample = x.numel() / batch;
  const int64_t k = static_cast<int64_t>(std::floor(static_cast<double>(mask_ratio) * static_cast<double>(per_sample)));
  Tensor out = x;
  if (k == 0) return out;

  std::vector<float> mags(static_cast<size_t>(per_sample));
  for (int b = 0; b < batch; ++b) {
    const float* si = saliency.data() + static_cast<int64_t>(b) * per_sample;
    float* oi = out.data() + static_cast<int64_t>(b) * per_sample;
    for (int64_t i = 0; i < per_sample; ++i) mags[static_cast<size_t>(i)] = std::fabs(si[i]);

    std::vector<float> scratch = mags;
    std::nth_element(scratch.begin(), scratch.begin() + (k - 1), scratch.end());
    const float boundary = scratch[static_cast<size_t>(k - 1)];

    // Below the boundary everything is masked; at the boundary the lowest
    // flat indices fill the remaining quota.
    int64_t below = 0;
    for (int64_t i = 0; i < per_sample; ++i) {
      if (mags[static_cast<size_t>(i)] < boundary) ++below;
    }
    int64_t at_quota = k - below;
    for (int64_t i = 0; i < per_sample; ++i) {
      const float m = mags[static_cast<size_t>(i)];
      if (m < boundary) {
        oi[i] = 0.0f;
      } else if (m == boundary && at_quota > 0) {
        oi[i] = 0.0f;
        --at_quota;
      }
    }
  }
  return out;
}

double saliency_l1(const Tensor& saliency) {
  const int batch = saliency.ndim() >= 1 ? saliency.dim(0) : 1;
  double total = 0.0;
  for (int64_t i = 0; i < saliency.numel(); ++i) total += std::fabs(static_cast<double>(saliency[i]));
  return total / batch;
}

float export_saliency_map(const Tensor& saliency, const std::string& path) {
  if (saliency.ndim() != 3) {
    throw std::invalid_argument("export_saliency_map: expected one [C,H,W] tensor, got " + saliency.shape_str());
  }
  const int c = saliency.dim(0), h = saliency.dim(1), w = saliency.dim(2);

  std::vector<float> pixel(static_cast<size_t>(h) * w, 0.0f);
  for (int ch = 0; ch < c; ++ch) {
    const float* plane = saliency.data() + static_cast<int64_t>(ch) * h * w;
    for (int64_t i = 0; i < static_cast<int64_t>(h) * w; ++i) {
      pixel[static_cast<size_t>(i)] = std::max(pixel[static_cast<size_t>(i)], std::fabs(plane[i]));
    }
  }
  float maxval = 0.0f;
  for (float v : pixel) maxval = std::max(maxval, v);

  std::vector<uint8_t> bytes(pixel.size(), 0);
  if (maxval > 0.0f) {
    for (size_t i = 0; i < pixel.size(); ++i) {
      bytes[i] = static_cast<uint8_t>(std::lround(255.0 * static_cast<double>(pixel[i]) / maxval));
    }
  }

  FILE* fp = std::fopen(path.c_str(), "wb");
  if (!fp) throw std::runtime_error("export_saliency_map: cannot open '" + path + "' for writing");
  std::fprintf(fp, "P5\n%d %d\n255\n", w, h);
  const size_t written = std::fwrite(bytes.data(), 1, bytes.size(), fp);
  std::fclose(fp);
  if (written != bytes.size()) throw std::runtime_error("export_saliency_map: short write to '" + path + "'");
  return maxval;
}

}  // namespace saliq
