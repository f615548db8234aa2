#include "saliq/train.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "saliq/ops.hpp"
#include "saliq/tape.hpp"

namespace saliq {

TrainMode parse_train_mode(const std::string& name) {
  if (name == "sgt_pact") return TrainMode::kSgtPact;
  if (name == "sgt_baseline") return TrainMode::kSgtBaseline;
  if (name == "float_baseline") return TrainMode::kFloatBaseline;
  throw std::invalid_argument("unknown mode '" + name + "' (expected sgt_pact, sgt_baseline or float_baseline)");
}

std::string train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::kSgtPact: return "sgt_pact";
    case TrainMode::kSgtBaseline: return "sgt_baseline";
    case TrainMode::kFloatBaseline: return "float_baseline";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("config: epochs must be >= 0");
  if (batch_size <= 0) throw std::invalid_argument("config: batch size must be positive");
  if (!(lr > 0.0f) || !(alpha_lr > 0.0f)) throw std::invalid_argument("config: learning rates must be positive");
  if (alpha_reg < 0.0f || lambda1 < 0.0f || lambda2 < 0.0f) {
    throw std::invalid_argument("config: regularizer weights must be non-negative");
  }
  validate_bits(bits);
  if (!(mask_ratio >= 0.0f && mask_ratio < 1.0f)) throw std::invalid_argument("config: mask ratio must be in [0, 1)");
  if (!(alpha_init > 0.0f)) throw std::invalid_argument("config: alpha_init must be positive");
}

double hybrid_loss(const Tensor& y_orig, const Tensor& y_masked, const std::vector<int>& labels,
                   const Tensor& saliency, float lambda1, float lambda2) {
  const double ce = ops::cross_entropy(y_orig, labels);
  const double kl = lambda1 > 0.0f ? ops::kl_divergence_logits(y_orig, y_masked) : 0.0;
  const double l1 = lambda2 > 0.0f ? saliency_l1(saliency) : 0.0;
  return ce + static_cast<double>(lambda1) * kl + static_cast<double>(lambda2) * l1;
}

namespace {

Tensor stack_batch(const std::vector<Tensor>& images) {
  const Tensor& first = images.front();
  std::vector<int> shape;
  shape.push_back(static_cast<int>(images.size()));
  for (int d : first.shape()) shape.push_back(d);
  Tensor out(std::move(shape));
  const int64_t stride = first.numel();
  for (size_t i = 0; i < images.size(); ++i) {
    std::memcpy(out.data() + static_cast<int64_t>(i) * stride, images[i].data(),
                sizeof(float) * static_cast<size_t>(stride));
  }
  return out;
}

std::vector<int> predict_argmax(const Tensor& logits) {
  const int n = logits.dim(0), c = logits.dim(1);
  std::vector<int> out(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    const float* row = logits.data() + static_cast<int64_t>(i) * c;
    int best = 0;
    for (int j = 1; j < c; ++j) {
      if (row[j] > row[best]) best = j;
    }
    out[static_cast<size_t>(i)] = best;
  }
  return out;
}

}  // namespace

Metrics evaluate_metrics(const Model& model, const Dataset& data, Split split) {
  const std::vector<int> indices = data.split_indices(split);
  if (indices.empty()) throw std::runtime_error("evaluate_metrics: empty evaluation split");
  const bool apply_quant = model.quant_spec().has_value();

  std::vector<int> y_true, y_pred;
  y_true.reserve(indices.size());
  y_pred.reserve(indices.size());
  constexpr int kEvalBatch = 128;
  for (size_t start = 0; start < indices.size(); start += kEvalBatch) {
    const size_t end = std::min(start + kEvalBatch, indices.size());
    std::vector<Tensor> images;
    images.reserve(end - start);
    for (size_t i = start; i < end; ++i) {
      const Sample& s = data.samples[static_cast<size_t>(indices[i])];
      images.push_back(s.image);
      y_true.push_back(s.label);
    }
    const Tensor logits = model.forward(stack_batch(images), apply_quant);
    for (int p : predict_argmax(logits)) y_pred.push_back(p);
  }
  return compute_metrics(y_true, y_pred, model.num_classes());
}

TrainResult train(const TrainConfig& config, const Dataset& data) {
  config.validate();
  if (data.samples.empty()) throw std::runtime_error("train: empty dataset");
  const std::vector<int> train_indices = data.split_indices(Split::kTrain);
  if (train_indices.empty()) throw std::runtime_error("train: empty training split");

  const bool sgt = config.mode != TrainMode::kFloatBaseline;
  const bool quantized = config.mode == TrainMode::kSgtPact;
  const bool apply_quant = quantized && config.fake_quant;
  const bool saliency_from_loss_grad = config.saliency_source == SaliencySource::kAuto
                                           ? config.mode == TrainMode::kSgtPact
                                           : config.saliency_source == SaliencySource::kLoss;

  const int channels = data.samples.front().image.dim(0);
  const int resolution = data.samples.front().image.dim(1);
  const int classes = data.num_classes();
  const std::string arch = config.arch.empty() ? default_arch(classes) : config.arch;

  Model model(arch, channels, resolution, config.alpha_init);
  if (model.num_classes() != classes) {
    throw std::invalid_argument("train: architecture emits " + std::to_string(model.num_classes()) +
                                " classes but the dataset has " + std::to_string(classes));
  }
  {
    Rng init_rng(mix_seed(config.seed, 0x1217ull));
    model.init_params(init_rng);
  }
  if (apply_quant) model.quant_spec() = QuantSpec{config.bits, true};

  std::vector<Tensor*> params = model.parameters();
  AdamState adam;
  adam.reset(params);
  const std::vector<int> pact_layers = model.pact_layer_indices();

  TrainResult result;
  result.model = model;
  result.best_epoch = 0;
  double best_acc = -1.0;

  auto take_best = [&](int epoch, const Metrics& val) {
    if (val.accuracy > best_acc) {
      best_acc = val.accuracy;
      result.model = model;
      result.val_metrics = val;
      result.best_epoch = epoch;
    }
  };

  if (config.epochs == 0) {
    const Metrics val = evaluate_metrics(model, data, Split::kVal);
    take_best(0, val);
    return result;
  }

  std::vector<int> order = train_indices;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    Rng shuffle_rng(mix_seed(config.seed, 0x5875ffull, static_cast<uint64_t>(epoch)));
    for (size_t i = order.size() - 1; i > 0; --i) {
      const size_t j = static_cast<size_t>(shuffle_rng.uniform_int(static_cast<uint64_t>(i) + 1));
      std::swap(order[i], order[j]);
    }

    double epoch_loss = 0.0;
    int64_t epoch_samples = 0;
    const int num_batches = static_cast<int>((order.size() + config.batch_size - 1) / config.batch_size);

    for (int batch = 0; batch < num_batches; ++batch) {
      const size_t start = static_cast<size_t>(batch) * config.batch_size;
      const size_t end = std::min(start + static_cast<size_t>(config.batch_size), order.size());
      std::vector<Tensor> images;
      std::vector<int> labels;
      images.reserve(end - start);
      labels.reserve(end - start);
      for (size_t i = start; i < end; ++i) {
        const Sample& s = data.samples[static_cast<size_t>(order[i])];
        if (config.augment) {
          Rng aug_rng(mix_seed(config.seed, 0xa76ull, static_cast<uint64_t>(epoch), static_cast<uint64_t>(order[i])));
          images.push_back(augment(s.image, aug_rng));
        } else {
          images.push_back(s.image);
        }
        labels.push_back(s.label);
      }
      const Tensor x = stack_batch(images);

      Tape tape;
      Model::TapeForward fwd = model.forward_tape(tape, x, apply_quant, /*input_requires_grad=*/sgt);
      const NodeId ce = tape.cross_entropy(fwd.logits, labels);

      NodeId loss_node = ce;
      if (sgt) {
        // Input saliency from the recorded forward, then the masked branch.
        const NodeId saliency_objective = saliency_from_loss_grad ? ce : tape.pick_label_sum(fwd.logits, labels);
        tape.backward(saliency_objective);
        const Tensor saliency = tape.grad(fwd.input);
        // An overflowing input gradient means the run is already lost; bail
        // before |S| ordering has to cope with non-finite values.
        if (!saliency.all_finite()) throw DivergenceError(epoch, batch);

        const Tensor masked = mask_bottom_fraction(x, saliency, config.mask_ratio);
        const NodeId masked_logits = model.forward_tape_branch(tape, fwd, masked);
        const NodeId kl = tape.kl_divergence_logits(fwd.logits, masked_logits);
        const float l1_term = static_cast<float>(config.lambda2 * saliency_l1(saliency));
        loss_node = tape.combine({ce, kl}, {1.0f, config.lambda1}, l1_term);
      }

      const float loss_value = tape.value(loss_node)[0];
      if (!std::isfinite(loss_value)) throw DivergenceError(epoch, batch);

      tape.backward(loss_node);
      std::vector<const Tensor*> grads;
      grads.reserve(fwd.param_nodes.size());
      for (NodeId id : fwd.param_nodes) grads.push_back(&tape.grad(id));
      adam_step(params, grads, adam, config.lr);

      for (size_t a = 0; a < pact_layers.size(); ++a) {
        Layer& layer = model.layers()[static_cast<size_t>(pact_layers[a])];
        const float dalpha = tape.grad(fwd.alpha_nodes[a])[0];
        layer.alpha = update_alpha(layer.alpha, dalpha, config.alpha_lr, config.alpha_reg);
      }

      epoch_loss += static_cast<double>(loss_value) * static_cast<double>(end - start);
      epoch_samples += static_cast<int64_t>(end - start);
    }

    const Metrics val = evaluate_metrics(model, data, Split::kVal);
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / static_cast<double>(epoch_samples);
    log.val_accuracy = val.accuracy;
    log.val_sensitivity = val.macro_sensitivity;
    log.val_specificity = val.macro_specificity;
    result.log.push_back(log);
    take_best(epoch, val);
  }

  return result;
}

}  // namespace saliq
