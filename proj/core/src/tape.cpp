#include "saliq/tape.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <utility>

#include "saliq/ops.hpp"
#include "saliq/quant.hpp"

namespace saliq {

namespace {

void check(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

}  // namespace

NodeId Tape::push(Node node) {
  nodes_.push_back(std::move(node));
  return static_cast<NodeId>(nodes_.size() - 1);
}

const Tape::Node& Tape::at(NodeId id) const {
  check(id >= 0 && id < static_cast<NodeId>(nodes_.size()), "tape: node id " + std::to_string(id) + " out of range");
  return nodes_[static_cast<size_t>(id)];
}

const Tensor& Tape::value(NodeId id) const { return at(id).value; }

NodeId Tape::input(Tensor value, bool requires_grad) {
  check(value.all_finite(), "tape: input tensor has non-finite values");
  Node n;
  n.op = Op::kInput;
  n.requires_grad = requires_grad;
  n.value = std::move(value);
  return push(std::move(n));
}

NodeId Tape::add(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  check(va.same_shape(vb), "add: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
  Node n;
  n.op = Op::kAdd;
  n.inputs = {a, b};
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.value = Tensor(va.shape());
  for (int64_t i = 0; i < va.numel(); ++i) n.value[i] = va[i] + vb[i];
  return push(std::move(n));
}

NodeId Tape::mul(NodeId a, NodeId b) {
  const Tensor& va = value(a);
  const Tensor& vb = value(b);
  check(va.same_shape(vb), "mul: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
  Node n;
  n.op = Op::kMul;
  n.inputs = {a, b};
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.value = Tensor(va.shape());
  for (int64_t i = 0; i < va.numel(); ++i) n.value[i] = va[i] * vb[i];
  return push(std::move(n));
}

NodeId Tape::matmul(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kMatMul;
  n.inputs = {a, b};
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.value = ops::matmul(value(a), value(b));
  return push(std::move(n));
}

NodeId Tape::conv2d(NodeId x, NodeId w, int stride, int padding) {
  Node n;
  n.op = Op::kConv2d;
  n.inputs = {x, w};
  n.requires_grad = at(x).requires_grad || at(w).requires_grad;
  n.iargs = {stride, padding};
  n.value = ops::conv2d(value(x), value(w), stride, padding);
  return push(std::move(n));
}

NodeId Tape::maxpool2d(NodeId x, int window) {
  Node n;
  n.op = Op::kMaxPool2d;
  n.inputs = {x};
  n.requires_grad = at(x).requires_grad;
  n.iargs = {window};
  n.value = ops::maxpool2d(value(x), window, &n.indices);
  return push(std::move(n));
}

NodeId Tape::dense(NodeId x, NodeId w, NodeId b) {
  Node n;
  n.op = Op::kDense;
  n.inputs = {x, w, b};
  n.requires_grad = at(x).requires_grad || at(w).requires_grad || at(b).requires_grad;
  n.value = ops::dense(value(x), value(w), value(b));
  return push(std::move(n));
}

NodeId Tape::softmax(NodeId logits) {
  Node n;
  n.op = Op::kSoftmax;
  n.inputs = {logits};
  n.requires_grad = at(logits).requires_grad;
  n.value = ops::softmax(value(logits));
  return push(std::move(n));
}

NodeId Tape::sum(NodeId x) {
  Node n;
  n.op = Op::kSum;
  n.inputs = {x};
  n.requires_grad = at(x).requires_grad;
  const Tensor& v = value(x);
  double total = 0.0;
  for (int64_t i = 0; i < v.numel(); ++i) total += static_cast<double>(v[i]);
  n.value = Tensor::scalar(static_cast<float>(total));
  return push(std::move(n));
}

NodeId Tape::reshape(NodeId x, std::vector<int> shape) {
  const Tensor& v = value(x);
  check(shape_numel(shape) == v.numel(), "reshape: element count mismatch " + v.shape_str() + " -> " +
                                             shape_to_string(shape));
  Node n;
  n.op = Op::kReshape;
  n.inputs = {x};
  n.requires_grad = at(x).requires_grad;
  std::vector<float> data(v.data(), v.data() + v.numel());
  n.value = Tensor(std::move(shape), std::move(data));
  return push(std::move(n));
}

NodeId Tape::pact(NodeId x, NodeId alpha, int bits, bool quantize) {
  const Tensor& va = value(alpha);
  check(va.numel() == 1, "pact: alpha must be a scalar node");
  if (quantize) validate_bits(bits);
  Node n;
  n.op = Op::kPact;
  n.inputs = {x, alpha};
  n.requires_grad = at(x).requires_grad || at(alpha).requires_grad;
  n.iargs = {bits, quantize ? 1 : 0};
  Tensor clipped = pact_forward(value(x), va[0]);
  n.value = quantize ? pact_quantize(clipped, va[0], bits) : std::move(clipped);
  return push(std::move(n));
}

NodeId Tape::fake_quant(NodeId w, int bits) {
  validate_bits(bits);
  Node n;
  n.op = Op::kFakeQuant;
  n.inputs = {w};
  n.requires_grad = at(w).requires_grad;
  n.value = quantize_weights_qat(value(w), bits);
  return push(std::move(n));
}

NodeId Tape::cross_entropy(NodeId logits, std::vector<int> labels) {
  Node n;
  n.op = Op::kCrossEntropy;
  n.inputs = {logits};
  n.requires_grad = at(logits).requires_grad;
  n.value = Tensor::scalar(static_cast<float>(ops::cross_entropy(value(logits), labels)));
  n.iargs.assign(labels.begin(), labels.end());
  return push(std::move(n));
}

NodeId Tape::kl_divergence_logits(NodeId a, NodeId b) {
  Node n;
  n.op = Op::kKlLogits;
  n.inputs = {a, b};
  n.requires_grad = at(a).requires_grad || at(b).requires_grad;
  n.value = Tensor::scalar(static_cast<float>(ops::kl_divergence_logits(value(a), value(b))));
  return push(std::move(n));
}

NodeId Tape::pick_label_sum(NodeId logits, std::vector<int> labels) {
  Node n;
  n.op = Op::kPickLabelSum;
  n.inputs = {logits};
  n.requires_grad = at(logits).requires_grad;
  n.value = Tensor::scalar(static_cast<float>(ops::pick_label_sum(value(logits), labels)));
  n.iargs.assign(labels.begin(), labels.end());
  return push(std::move(n));
}

NodeId Tape::combine(const std::vector<NodeId>& terms, const std::vector<float>& coeffs, float constant) {
  check(terms.size() == coeffs.size(), "combine: terms/coeffs size mismatch");
  Node n;
  n.op = Op::kCombine;
  n.inputs = terms;
  double total = static_cast<double>(constant);
  for (size_t i = 0; i < terms.size(); ++i) {
    const Tensor& v = value(terms[i]);
    check(v.numel() == 1, "combine: term " + std::to_string(i) + " is not scalar");
    n.requires_grad = n.requires_grad || at(terms[i]).requires_grad;
    total += static_cast<double>(coeffs[i]) * static_cast<double>(v[0]);
  }
  n.fargs = coeffs;
  n.fargs.push_back(constant);
  n.value = Tensor::scalar(static_cast<float>(total));
  return push(std::move(n));
}

Tensor& Tape::grad_buffer(NodeId id) {
  Tensor& g = grads_[static_cast<size_t>(id)];
  if (g.empty()) g = Tensor(nodes_[static_cast<size_t>(id)].value.shape());
  return g;
}

const Tensor& Tape::grad(NodeId id) {
  check(!grads_.empty(), "tape: backward has not been run");
  at(id);
  return grad_buffer(id);
}

void Tape::backward(NodeId loss) {
  check(!nodes_.empty(), "tape: backward on empty tape");
  const Node& top = at(loss);
  check(top.value.numel() == 1, "tape: loss node must be scalar, got shape " + top.value.shape_str());

  grads_.assign(nodes_.size(), Tensor());
  grad_buffer(loss)[0] = 1.0f;

  for (NodeId id = loss; id >= 0; --id) {
    Node& node = nodes_[static_cast<size_t>(id)];
    if (!node.requires_grad) continue;
    Tensor& g = grads_[static_cast<size_t>(id)];
    if (g.empty()) continue;

    auto wants = [&](size_t slot) { return nodes_[static_cast<size_t>(node.inputs[slot])].requires_grad; };

    switch (node.op) {
      case Op::kInput:
        break;
      case Op::kAdd: {
        for (size_t s = 0; s < 2; ++s) {
          if (!wants(s)) continue;
          Tensor& gi = grad_buffer(node.inputs[s]);
          for (int64_t i = 0; i < g.numel(); ++i) gi[i] += g[i];
        }
        break;
      }
      case Op::kMul: {
        const Tensor& va = value(node.inputs[0]);
        const Tensor& vb = value(node.inputs[1]);
        if (wants(0)) {
          Tensor& ga = grad_buffer(node.inputs[0]);
          for (int64_t i = 0; i < g.numel(); ++i) ga[i] += g[i] * vb[i];
        }
        if (wants(1)) {
          Tensor& gb = grad_buffer(node.inputs[1]);
          for (int64_t i = 0; i < g.numel(); ++i) gb[i] += g[i] * va[i];
        }
        break;
      }
      case Op::kMatMul: {
        Tensor da, db;
        ops::matmul_backward(value(node.inputs[0]), value(node.inputs[1]), g, wants(0) ? &da : nullptr,
                             wants(1) ? &db : nullptr);
        if (wants(0)) {
          Tensor& ga = grad_buffer(node.inputs[0]);
          for (int64_t i = 0; i < da.numel(); ++i) ga[i] += da[i];
        }
        if (wants(1)) {
          Tensor& gb = grad_buffer(node.inputs[1]);
          for (int64_t i = 0; i < db.numel(); ++i) gb[i] += db[i];
        }
        break;
      }
      case Op::kConv2d: {
        Tensor dx, dw;
        ops::conv2d_backward(value(node.inputs[0]), value(node.inputs[1]), node.iargs[0], node.iargs[1], g,
                             wants(0) ? &dx : nullptr, wants(1) ? &dw : nullptr);
        if (wants(0)) {
          Tensor& gx = grad_buffer(node.inputs[0]);
          for (int64_t i = 0; i < dx.numel(); ++i) gx[i] += dx[i];
        }
        if (wants(1)) {
          Tensor& gw = grad_buffer(node.inputs[1]);
          for (int64_t i = 0; i < dw.numel(); ++i) gw[i] += dw[i];
        }
        break;
      }
      case Op::kMaxPool2d: {
        if (wants(0)) ops::maxpool2d_backward(g, node.indices, grad_buffer(node.inputs[0]));
        break;
      }
      case Op::kDense: {
        Tensor dx, dw, db;
        ops::dense_backward(value(node.inputs[0]), value(node.inputs[1]), g, wants(0) ? &dx : nullptr,
                            wants(1) ? &dw : nullptr, wants(2) ? &db : nullptr);
        if (wants(0)) {
          Tensor& gx = grad_buffer(node.inputs[0]);
          for (int64_t i = 0; i < dx.numel(); ++i) gx[i] += dx[i];
        }
        if (wants(1)) {
          Tensor& gw = grad_buffer(node.inputs[1]);
          for (int64_t i = 0; i < dw.numel(); ++i) gw[i] += dw[i];
        }
        if (wants(2)) {
          Tensor& gb = grad_buffer(node.inputs[2]);
          for (int64_t i = 0; i < db.numel(); ++i) gb[i] += db[i];
        }
        break;
      }
      case Op::kSoftmax: {
        if (wants(0)) ops::softmax_backward(node.value, g, grad_buffer(node.inputs[0]));
        break;
      }
      case Op::kSum: {
        if (wants(0)) {
          Tensor& gx = grad_buffer(node.inputs[0]);
          const float up = g[0];
          for (int64_t i = 0; i < gx.numel(); ++i) gx[i] += up;
        }
        break;
      }
      case Op::kReshape: {
        if (wants(0)) {
          Tensor& gx = grad_buffer(node.inputs[0]);
          for (int64_t i = 0; i < g.numel(); ++i) gx[i] += g[i];
        }
        break;
      }
      case Op::kPact: {
        const Tensor& x = value(node.inputs[0]);
        const float alpha = value(node.inputs[1])[0];
        float dalpha = 0.0f;
        Tensor dx_scratch(x.shape());
        pact_backward(x, alpha, g, dx_scratch, dalpha);
        if (wants(0)) {
          Tensor& gx = grad_buffer(node.inputs[0]);
          for (int64_t i = 0; i < dx_scratch.numel(); ++i) gx[i] += dx_scratch[i];
        }
        if (wants(1)) grad_buffer(node.inputs[1])[0] += dalpha;
        break;
      }
      case Op::kFakeQuant: {
        if (wants(0)) {
          Tensor& gw = grad_buffer(node.inputs[0]);
          for (int64_t i = 0; i < g.numel(); ++i) gw[i] += g[i];
        }
        break;
      }
      case Op::kCrossEntropy: {
        if (wants(0)) {
          std::vector<int> labels(node.iargs.begin(), node.iargs.end());
          ops::cross_entropy_backward(value(node.inputs[0]), labels, static_cast<double>(g[0]),
                                      grad_buffer(node.inputs[0]));
        }
        break;
      }
      case Op::kKlLogits: {
        const bool wa = wants(0), wb = wants(1);
        if (wa || wb) {
          Tensor da(value(node.inputs[0]).shape());
          Tensor db(value(node.inputs[1]).shape());
          ops::kl_divergence_logits_backward(value(node.inputs[0]), value(node.inputs[1]), static_cast<double>(g[0]),
                                             da, db);
          if (wa) {
            Tensor& ga = grad_buffer(node.inputs[0]);
            for (int64_t i = 0; i < da.numel(); ++i) ga[i] += da[i];
          }
          if (wb) {
            Tensor& gb = grad_buffer(node.inputs[1]);
            for (int64_t i = 0; i < db.numel(); ++i) gb[i] += db[i];
          }
        }
        break;
      }
      case Op::kPickLabelSum: {
        if (wants(0)) {
          std::vector<int> labels(node.iargs.begin(), node.iargs.end());
          ops::pick_label_sum_backward(labels, static_cast<double>(g[0]), grad_buffer(node.inputs[0]));
        }
        break;
      }
      case Op::kCombine: {
        for (size_t s = 0; s < node.inputs.size(); ++s) {
          if (!wants(s)) continue;
          grad_buffer(node.inputs[s])[0] += node.fargs[s] * g[0];
        }
        break;
      }
    }
  }
}

}  // namespace saliq
