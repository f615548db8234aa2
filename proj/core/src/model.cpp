#include "saliq/model.hpp"

#include <cmath>
#include <stdexcept>

#include "saliq/ops.hpp"

namespace saliq {

namespace {

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  while (start <= s.size()) {
    size_t end = s.find(sep, start);
    if (end == std::string::npos) end = s.size();
    out.push_back(s.substr(start, end - start));
    start = end + 1;
  }
  return out;
}

}  // namespace

std::vector<Layer> parse_arch(const std::string& arch) {
  std::vector<Layer> layers;
  for (const std::string& tok : split(arch, '|')) {
    if (tok.empty()) throw std::invalid_argument("arch: empty layer token in '" + arch + "'");
    Layer layer{};
    const size_t colon = tok.find(':');
    const std::string name = tok.substr(0, colon == std::string::npos ? tok.size() : colon);
    int width = 0;
    if (colon != std::string::npos) {
      width = std::stoi(tok.substr(colon + 1));
      if (width <= 0) throw std::invalid_argument("arch: width must be positive in '" + tok + "'");
    }
    if (name == "conv") {
      if (width == 0) throw std::invalid_argument("arch: conv needs a channel count, e.g. conv:16");
      layer.kind = LayerKind::kConv;
      layer.width = width;
    } else if (name == "pact") {
      layer.kind = LayerKind::kPact;
    } else if (name == "pool") {
      layer.kind = LayerKind::kPool;
    } else if (name == "flatten") {
      layer.kind = LayerKind::kFlatten;
    } else if (name == "dense") {
      if (width == 0) throw std::invalid_argument("arch: dense needs a feature count, e.g. dense:128");
      layer.kind = LayerKind::kDense;
      layer.width = width;
    } else {
      throw std::invalid_argument("arch: unknown layer '" + name + "'");
    }
    layers.push_back(layer);
  }
  if (layers.empty()) throw std::invalid_argument("arch: empty architecture");
  return layers;
}

std::string format_arch(const std::vector<Layer>& layers) {
  std::string out;
  for (size_t i = 0; i < layers.size(); ++i) {
    if (i) out += "|";
    switch (layers[i].kind) {
      case LayerKind::kConv: out += "conv:" + std::to_string(layers[i].width); break;
      case LayerKind::kPact: out += "pact"; break;
      case LayerKind::kPool: out += "pool"; break;
      case LayerKind::kFlatten: out += "flatten"; break;
      case LayerKind::kDense: out += "dense:" + std::to_string(layers[i].width); break;
    }
  }
  return out;
}

std::string default_arch(int num_classes) {
  return "conv:16|pact|pool|conv:32|pact|pool|conv:64|pact|pool|flatten|dense:128|pact|dense:" +
         std::to_string(num_classes);
}

Model::Model(const std::string& arch, int input_channels, int resolution, float alpha_init)
    : layers_(parse_arch(arch)), input_channels_(input_channels), resolution_(resolution) {
  if (input_channels <= 0 || resolution <= 0) throw std::invalid_argument("model: bad input dimensions");
  if (!(alpha_init > 0.0f)) throw std::invalid_argument("model: alpha_init must be positive");

  // Walk the layer shapes once to size the parameter tensors.
  int channels = input_channels_;
  int spatial = resolution_;
  int features = -1;  // set after flatten
  for (Layer& layer : layers_) {
    switch (layer.kind) {
      case LayerKind::kConv: {
        if (features >= 0) throw std::invalid_argument("model: conv after flatten");
        layer.weight = Tensor({layer.width, channels, 3, 3});
        channels = layer.width;
        break;
      }
      case LayerKind::kPact:
        layer.alpha = alpha_init;
        break;
      case LayerKind::kPool: {
        if (features >= 0) throw std::invalid_argument("model: pool after flatten");
        if (spatial % 2 != 0) throw std::invalid_argument("model: spatial dim not divisible by pool window");
        spatial /= 2;
        break;
      }
      case LayerKind::kFlatten: {
        if (features >= 0) throw std::invalid_argument("model: duplicate flatten");
        features = channels * spatial * spatial;
        break;
      }
      case LayerKind::kDense: {
        if (features < 0) throw std::invalid_argument("model: dense before flatten");
        layer.weight = Tensor({features, layer.width});
        layer.bias = Tensor({layer.width});
        features = layer.width;
        break;
      }
    }
  }
  if (layers_.back().kind != LayerKind::kDense) throw std::invalid_argument("model: last layer must be dense");
  num_classes_ = layers_.back().width;
  validate();
}

void Model::validate() const {
  for (const Layer& layer : layers_) {
    if (layer.kind == LayerKind::kPact && !(layer.alpha > 0.0f)) {
      throw std::invalid_argument("model: PACT layer alpha must be positive");
    }
  }
}

void Model::init_params(Rng& rng) {
  for (Layer& layer : layers_) {
    if (layer.kind == LayerKind::kConv) {
      const int fan_in = layer.weight.dim(1) * 9;
      const double std = std::sqrt(2.0 / fan_in);
      for (int64_t i = 0; i < layer.weight.numel(); ++i) {
        layer.weight[i] = static_cast<float>(rng.normal(0.0, std));
      }
    } else if (layer.kind == LayerKind::kDense) {
      const int fan_in = layer.weight.dim(0);
      const double std = std::sqrt(2.0 / fan_in);
      for (int64_t i = 0; i < layer.weight.numel(); ++i) {
        layer.weight[i] = static_cast<float>(rng.normal(0.0, std));
      }
      for (int64_t i = 0; i < layer.bias.numel(); ++i) layer.bias[i] = 0.0f;
    }
  }
}

std::vector<Tensor*> Model::parameters() {
  std::vector<Tensor*> out;
  for (Layer& layer : layers_) {
    if (layer.kind == LayerKind::kConv) {
      out.push_back(&layer.weight);
    } else if (layer.kind == LayerKind::kDense) {
      out.push_back(&layer.weight);
      out.push_back(&layer.bias);
    }
  }
  return out;
}

std::vector<const Tensor*> Model::parameters() const {
  std::vector<const Tensor*> out;
  for (const Layer& layer : layers_) {
    if (layer.kind == LayerKind::kConv) {
      out.push_back(&layer.weight);
    } else if (layer.kind == LayerKind::kDense) {
      out.push_back(&layer.weight);
      out.push_back(&layer.bias);
    }
  }
  return out;
}

std::vector<int> Model::pact_layer_indices() const {
  std::vector<int> out;
  for (size_t i = 0; i < layers_.size(); ++i) {
    if (layers_[i].kind == LayerKind::kPact) out.push_back(static_cast<int>(i));
  }
  return out;
}

int64_t Model::parameter_count() const {
  int64_t n = 0;
  for (const Tensor* t : parameters()) n += t->numel();
  return n;
}

Tensor Model::forward(const Tensor& x, bool apply_quant) const {
  if (apply_quant && !quant_spec_) throw std::invalid_argument("model: quantized forward without a quant spec");
  const int bits = quant_spec_ ? quant_spec_->bits : 0;
  const bool quant_weights = apply_quant && quant_spec_->quantize_weights;

  Tensor cur = x;
  for (const Layer& layer : layers_) {
    switch (layer.kind) {
      case LayerKind::kConv: {
        const Tensor& w = layer.weight;
        cur = quant_weights ? ops::conv2d(cur, quantize_weights_qat(w, bits), 1, 1) : ops::conv2d(cur, w, 1, 1);
        break;
      }
      case LayerKind::kPact: {
        Tensor clipped = pact_forward(cur, layer.alpha);
        cur = apply_quant ? pact_quantize(clipped, layer.alpha, bits) : std::move(clipped);
        break;
      }
      case LayerKind::kPool:
        cur = ops::maxpool2d(cur, 2);
        break;
      case LayerKind::kFlatten: {
        const int n = cur.dim(0);
        const int f = static_cast<int>(cur.numel() / n);
        std::vector<float> data(cur.data(), cur.data() + cur.numel());
        cur = Tensor({n, f}, std::move(data));
        break;
      }
      case LayerKind::kDense: {
        const Tensor& w = layer.weight;
        cur = quant_weights ? ops::dense(cur, quantize_weights_qat(w, bits), layer.bias)
                            : ops::dense(cur, w, layer.bias);
        break;
      }
    }
  }
  return cur;
}

NodeId Model::build_forward(Tape& tape, NodeId x, const std::vector<NodeId>& params, const std::vector<NodeId>& alphas,
                            bool apply_quant) const {
  const int bits = quant_spec_ ? quant_spec_->bits : 8;
  const bool quant_weights = apply_quant && quant_spec_ && quant_spec_->quantize_weights;

  NodeId cur = x;
  size_t pi = 0, ai = 0;
  for (const Layer& layer : layers_) {
    switch (layer.kind) {
      case LayerKind::kConv: {
        NodeId w = params[pi++];
        if (quant_weights) w = tape.fake_quant(w, bits);
        cur = tape.conv2d(cur, w, 1, 1);
        break;
      }
      case LayerKind::kPact:
        cur = tape.pact(cur, alphas[ai++], bits, apply_quant);
        break;
      case LayerKind::kPool:
        cur = tape.maxpool2d(cur, 2);
        break;
      case LayerKind::kFlatten: {
        const Tensor& v = tape.value(cur);
        const int n = v.dim(0);
        const int f = static_cast<int>(v.numel() / n);
        cur = tape.reshape(cur, {n, f});
        break;
      }
      case LayerKind::kDense: {
        NodeId w = params[pi++];
        if (quant_weights) w = tape.fake_quant(w, bits);
        NodeId b = params[pi++];
        cur = tape.dense(cur, w, b);
        break;
      }
    }
  }
  return cur;
}

Model::TapeForward Model::forward_tape(Tape& tape, const Tensor& x, bool apply_quant, bool input_requires_grad) const {
  if (apply_quant && !quant_spec_) throw std::invalid_argument("model: quantized forward without a quant spec");
  TapeForward out;
  out.apply_quant = apply_quant;
  out.input = tape.input(x, input_requires_grad);
  for (const Tensor* p : parameters()) out.param_nodes.push_back(tape.input(*p, true));
  for (int idx : pact_layer_indices()) {
    out.alpha_nodes.push_back(tape.input(Tensor::scalar(layers_[static_cast<size_t>(idx)].alpha), true));
  }
  out.logits = build_forward(tape, out.input, out.param_nodes, out.alpha_nodes, apply_quant);
  return out;
}

NodeId Model::forward_tape_branch(Tape& tape, const TapeForward& base, const Tensor& x) const {
  NodeId input = tape.input(x, false);
  return build_forward(tape, input, base.param_nodes, base.alpha_nodes, base.apply_quant);
}

}  // namespace saliq
