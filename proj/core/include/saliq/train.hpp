#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "saliq/adam.hpp"
#include "saliq/dataset.hpp"
#include "saliq/metrics.hpp"
#include "saliq/model.hpp"
#include "saliq/saliency.hpp"

namespace saliq {

enum class TrainMode { kSgtPact, kSgtBaseline, kFloatBaseline };
enum class SaliencySource { kAuto, kLoss, kLogit };

TrainMode parse_train_mode(const std::string& name);
std::string train_mode_name(TrainMode mode);

struct TrainConfig {
  int epochs = 50;
  int batch_size = 128;
  float lr = 1e-3f;
  float alpha_lr = 1e-2f;
  float alpha_reg = 1e-4f;
  float lambda1 = 1.0f;
  float lambda2 = 1e-4f;
  int bits = 8;
  float mask_ratio = 0.5f;
  TrainMode mode = TrainMode::kSgtPact;
  uint64_t seed = 0;
  float alpha_init = 6.0f;
  std::string arch;  // empty selects the default architecture

  // kAuto resolves per mode: loss gradient for sgt_pact, true-class logit
  // gradient for sgt_baseline.
  SaliencySource saliency_source = SaliencySource::kAuto;
  // Test hook: record the sgt_pact graph with the k-bit ops replaced by
  // identity. Not exposed on the CLI.
  bool fake_quant = true;
  bool augment = true;

  void validate() const;
};

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double val_sensitivity = 0.0;
  double val_specificity = 0.0;
};

struct TrainResult {
  Model model;  // best-validation snapshot
  Metrics val_metrics;
  std::vector<EpochLog> log;
  int best_epoch = 0;
};

/// Non-finite training loss; names the epoch and batch that diverged.
class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(int epoch, int batch)
      : std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                           std::to_string(batch)),
        epoch(epoch),
        batch(batch) {}
  int epoch;
  int batch;
};

/// Hybrid objective: CE(y_orig, labels) + lambda1 * KL(softmax(y_orig) ||
/// softmax(y_masked)) + lambda2 * ||S||_1.
double hybrid_loss(const Tensor& y_orig, const Tensor& y_masked, const std::vector<int>& labels, const Tensor& saliency,
                   float lambda1, float lambda2);

/// Full training loop: per batch, forward on X (with PACT + fake quant in
/// sgt_pact mode), input saliency, adaptive masking, forward on the masked
/// batch, hybrid loss, Adam step, clip update. Deterministic given the seed.
TrainResult train(const TrainConfig& config, const Dataset& data);

/// Confusion matrix and macro metrics over one split via argmax predictions.
/// Quantization applies whenever the model carries a quant spec.
Metrics evaluate_metrics(const Model& model, const Dataset& data, Split split);

}  // namespace saliq
