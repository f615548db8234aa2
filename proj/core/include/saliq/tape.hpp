#pragma once

#include <cstdint>
#include <vector>

#include "saliq/tensor.hpp"

namespace saliq {

using NodeId = int32_t;

/// Define-by-run reverse-mode tape. Ops evaluate eagerly when recorded; the
/// node list is therefore topologically ordered and backward() walks it once
/// in reverse. One tape per batch, single-threaded.
class Tape {
 public:
  /// Record a leaf. Leaf values must be finite.
  NodeId input(Tensor value, bool requires_grad);

  NodeId add(NodeId a, NodeId b);
  NodeId mul(NodeId a, NodeId b);
  NodeId matmul(NodeId a, NodeId b);
  NodeId conv2d(NodeId x, NodeId w, int stride, int padding);
  NodeId maxpool2d(NodeId x, int window);
  NodeId dense(NodeId x, NodeId w, NodeId b);
  NodeId softmax(NodeId logits);
  NodeId sum(NodeId x);
  NodeId reshape(NodeId x, std::vector<int> shape);

  /// Clip to [0, alpha], snapping onto the 2^bits grid when quantize is set.
  /// alpha is a scalar node so the clip threshold receives gradient.
  NodeId pact(NodeId x, NodeId alpha, int bits, bool quantize);

  /// Symmetric fake quantization of a weight tensor; backward is identity.
  NodeId fake_quant(NodeId w, int bits);

  NodeId cross_entropy(NodeId logits, std::vector<int> labels);
  NodeId kl_divergence_logits(NodeId a, NodeId b);
  NodeId pick_label_sum(NodeId logits, std::vector<int> labels);

  /// Scalar affine combination sum_i coeffs[i] * terms[i] + constant.
  NodeId combine(const std::vector<NodeId>& terms, const std::vector<float>& coeffs, float constant);

  const Tensor& value(NodeId id) const;
  int size() const { return static_cast<int>(nodes_.size()); }

  /// Gradient of the scalar loss node with respect to every recorded node
  /// that requires grad. May be called repeatedly; gradients reset each call.
  void backward(NodeId loss);

  /// Gradient filled by the last backward() (zeros if none reached the node).
  const Tensor& grad(NodeId id);

 private:
  enum class Op : uint8_t {
    kInput,
    kAdd,
    kMul,
    kMatMul,
    kConv2d,
    kMaxPool2d,
    kDense,
    kSoftmax,
    kSum,
    kReshape,
    kPact,
    kFakeQuant,
    kCrossEntropy,
    kKlLogits,
    kPickLabelSum,
    kCombine,
  };

  struct Node {
    Op op;
    bool requires_grad = false;
    std::vector<NodeId> inputs;
    Tensor value;
    // op-specific saved state
    std::vector<int> iargs;          // stride/padding/window/bits/labels...
    std::vector<float> fargs;        // combine coefficients + constant
    std::vector<int32_t> indices;    // maxpool argmax
  };

  NodeId push(Node node);
  const Node& at(NodeId id) const;
  Tensor& grad_buffer(NodeId id);

  std::vector<Node> nodes_;
  std::vector<Tensor> grads_;
};

}  // namespace saliq
