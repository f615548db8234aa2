#pragma once

#include <string>
#include <vector>

#include "saliq/model.hpp"
#include "saliq/tensor.hpp"

namespace saliq {

/// Masking configuration: rho is the fraction of lowest-|S| input features
/// zeroed per sample; lambda1/lambda2 weight the KL and L1 loss terms;
/// epsilon holds the most recent adaptive threshold.
struct SaliencyConfig {
  float mask_ratio = 0.5f;
  float lambda1 = 1.0f;
  float lambda2 = 1e-4f;
  float epsilon = 0.0f;
};

/// One exported map: gradient magnitudes shaped like the input image.
struct SaliencyMap {
  Tensor values;
  int source_label = -1;
  float normalization = 0.0f;
};

/// Gradient of the batch cross-entropy loss with respect to the input.
Tensor saliency_from_loss(const Model& model, const Tensor& x, const std::vector<int>& labels, bool apply_quant);

/// Gradient of the summed true-class logit with respect to the input.
Tensor saliency_from_logit(const Model& model, const Tensor& x, const std::vector<int>& labels, bool apply_quant);

/// Per-sample threshold: the floor(rho*n)-th smallest |S| of each sample, so
/// that exactly that many elements satisfy |S| <= eps when magnitudes are
/// tie-free. Returns -1 for a sample when floor(rho*n) == 0 (mask nothing).
std::vector<float> adaptive_threshold(const Tensor& saliency, float mask_ratio);

/// Threshold mask: keeps x where |S| > eps for the sample, zero elsewhere.
/// Kept entries are bit-identical to the input.
Tensor mask_features(const Tensor& x, const Tensor& saliency, const std::vector<float>& eps);

/// Rank mask: zeroes exactly floor(rho*n) elements per sample, the smallest
/// by (|S|, flat index) ascending. Equal to mask_features over
/// adaptive_threshold whenever |S| values are tie-free.
Tensor mask_bottom_fraction(const Tensor& x, const Tensor& saliency, float mask_ratio);

/// Mean over the batch of the elementwise L1 norm.
double saliency_l1(const Tensor& saliency);

/// Write one image-shaped saliency tensor [C,H,W] as a binary PGM (P5,
/// maxval 255): per-pixel channel-max magnitude scaled by the image max.
/// Returns the normalization used (0 for an all-zero map).
float export_saliency_map(const Tensor& saliency, const std::string& path);

}  // namespace saliq
