#pragma once

#include <optional>
#include <string>
#include <vector>

#include "saliq/quant.hpp"
#include "saliq/rng.hpp"
#include "saliq/tape.hpp"
#include "saliq/tensor.hpp"

namespace saliq {

enum class LayerKind { kConv, kPact, kPool, kFlatten, kDense };

/// One layer of the classifier. Conv layers are 3x3 stride 1 pad 1 without
/// bias; pools are 2x2; PACT layers own a scalar clip alpha.
struct Layer {
  LayerKind kind;
  int width = 0;   // conv out channels / dense out features
  Tensor weight;
  Tensor bias;     // dense only
  float alpha = 0.0f;
};

/// Architecture string, e.g. "conv:16|pact|pool|conv:32|pact|pool|conv:64|pact|pool|flatten|dense:128|pact|dense:8".
std::vector<Layer> parse_arch(const std::string& arch);
std::string format_arch(const std::vector<Layer>& layers);
std::string default_arch(int num_classes);

class Model {
 public:
  Model() = default;
  Model(const std::string& arch, int input_channels, int resolution, float alpha_init);

  void init_params(Rng& rng);

  int input_channels() const { return input_channels_; }
  int resolution() const { return resolution_; }
  int num_classes() const { return num_classes_; }

  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }

  std::optional<QuantSpec>& quant_spec() { return quant_spec_; }
  const std::optional<QuantSpec>& quant_spec() const { return quant_spec_; }

  /// Trainable weight/bias tensors in declaration order (alphas excluded;
  /// they follow their own update rule).
  std::vector<Tensor*> parameters();
  std::vector<const Tensor*> parameters() const;

  /// Indices into layers() of the PACT layers.
  std::vector<int> pact_layer_indices() const;

  /// Forward pass for a batch [N,C,H,W] without recording gradients.
  /// Applies fake quantization when apply_quant is set (requires quant_spec).
  Tensor forward(const Tensor& x, bool apply_quant) const;

  struct TapeForward {
    NodeId input = -1;
    NodeId logits = -1;
    bool apply_quant = false;
    std::vector<NodeId> param_nodes;        // aligned with parameters()
    std::vector<NodeId> alpha_nodes;        // aligned with pact_layer_indices()
  };

  /// Record the forward pass on a tape, creating fresh leaves for the
  /// parameters and alphas. input_requires_grad enables input saliency.
  TapeForward forward_tape(Tape& tape, const Tensor& x, bool apply_quant, bool input_requires_grad) const;

  /// Extend a recorded forward with a second branch on new input, reusing the
  /// existing parameter/alpha leaves.
  NodeId forward_tape_branch(Tape& tape, const TapeForward& base, const Tensor& x) const;

  /// Total parameter element count (weights + biases).
  int64_t parameter_count() const;

 private:
  NodeId build_forward(Tape& tape, NodeId x, const std::vector<NodeId>& params, const std::vector<NodeId>& alphas,
                       bool apply_quant) const;
  void validate() const;

  std::vector<Layer> layers_;
  std::optional<QuantSpec> quant_spec_;
  int input_channels_ = 3;
  int resolution_ = 64;
  int num_classes_ = 0;
};

}  // namespace saliq
