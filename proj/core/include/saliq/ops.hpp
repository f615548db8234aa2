#pragma once

#include <cstdint>
#include <vector>

#include "saliq/tensor.hpp"

namespace saliq::ops {

/// Cross-correlation of NCHW input with OIHW kernel, zero padding, no bias.
/// Accumulation order per output element is (in_channel, kh, kw) ascending;
/// the reference oracle in the test suite relies on this being bit-exact.
Tensor conv2d(const Tensor& x, const Tensor& w, int stride, int padding);
void conv2d_backward(const Tensor& x, const Tensor& w, int stride, int padding, const Tensor& dy, Tensor* dx,
                     Tensor* dw);

/// Per-window max over non-overlapping window x window tiles. H and W must be
/// divisible by window. Ties go to the lowest flat index. argmax_out, when
/// given, receives the flat HW index of the winning element per output cell.
Tensor maxpool2d(const Tensor& x, int window, std::vector<int32_t>* argmax_out = nullptr);
void maxpool2d_backward(const Tensor& dy, const std::vector<int32_t>& argmax, Tensor& dx);

/// x [N,F] * w [F,G] + b [G] broadcast over rows.
Tensor dense(const Tensor& x, const Tensor& w, const Tensor& b);
void dense_backward(const Tensor& x, const Tensor& w, const Tensor& dy, Tensor* dx, Tensor* dw, Tensor* db);

/// 2-D matrix product a [M,K] * b [K,N].
Tensor matmul(const Tensor& a, const Tensor& b);
void matmul_backward(const Tensor& a, const Tensor& b, const Tensor& dy, Tensor* da, Tensor* db);

/// Row-wise softmax with max subtraction, input [N,C].
Tensor softmax(const Tensor& logits);
void softmax_backward(const Tensor& probs, const Tensor& dy, Tensor& dx);

/// Mean over the batch of -log softmax(logits)[label].
double cross_entropy(const Tensor& logits, const std::vector<int>& labels);
void cross_entropy_backward(const Tensor& logits, const std::vector<int>& labels, double upstream, Tensor& dlogits);

/// Mean over the batch of sum_c p_c (ln p_c - ln q_c) on probability rows.
/// Rows must sum to 1 within 1e-4; q is clamped below at 1e-12 before the log;
/// p_c == 0 terms contribute zero.
double kl_divergence(const Tensor& p, const Tensor& q);

/// Same divergence computed from two logit tensors via stable log-softmax.
double kl_divergence_logits(const Tensor& a, const Tensor& b);
void kl_divergence_logits_backward(const Tensor& a, const Tensor& b, double upstream, Tensor& da, Tensor& db);

/// Sum of logits[n, labels[n]] over the batch (scalar; saliency source for
/// the gradient-of-logit mode).
double pick_label_sum(const Tensor& logits, const std::vector<int>& labels);
void pick_label_sum_backward(const std::vector<int>& labels, double upstream, Tensor& dlogits);

}  // namespace saliq::ops
