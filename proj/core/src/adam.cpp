#include "saliq/adam.hpp"

#include <cmath>
#include <stdexcept>

#include "saliq/quant.hpp"

namespace saliq {

void AdamState::reset(const std::vector<Tensor*>& params) {
  step = 0;
  m.clear();
  v.clear();
  for (const Tensor* p : params) {
    m.emplace_back(p->shape());
    v.emplace_back(p->shape());
  }
}

void adam_step(std::vector<Tensor*>& params, const std::vector<const Tensor*>& grads, AdamState& state, float lr) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: param/grad count mismatch");
  if (!(lr > 0.0f)) throw std::invalid_argument("adam_step: learning rate must be positive");
  if (state.m.size() != params.size()) state.reset(params);

  ++state.step;
  const double b1 = static_cast<double>(state.beta1);
  const double b2 = static_cast<double>(state.beta2);
  const double correction1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double correction2 = 1.0 - std::pow(b2, static_cast<double>(state.step));

  for (size_t pi = 0; pi < params.size(); ++pi) {
    Tensor& p = *params[pi];
    const Tensor& g = *grads[pi];
    if (!p.same_shape(g)) {
      throw std::invalid_argument("adam_step: gradient shape " + g.shape_str() + " does not match parameter " +
                                  p.shape_str());
    }
    Tensor& m = state.m[pi];
    Tensor& v = state.v[pi];
    for (int64_t i = 0; i < p.numel(); ++i) {
      const double gi = static_cast<double>(g[i]);
      const double mi = b1 * static_cast<double>(m[i]) + (1.0 - b1) * gi;
      const double vi = b2 * static_cast<double>(v[i]) + (1.0 - b2) * gi * gi;
      m[i] = static_cast<float>(mi);
      v[i] = static_cast<float>(vi);
      const double mhat = mi / correction1;
      const double vhat = vi / correction2;
      p[i] = static_cast<float>(static_cast<double>(p[i]) -
                                static_cast<double>(lr) * mhat / (std::sqrt(vhat) + static_cast<double>(state.epsilon)));
    }
  }
}

float update_alpha(float alpha, float dalpha, float alpha_lr, float alpha_reg) {
  const double updated = static_cast<double>(alpha) -
                         static_cast<double>(alpha_lr) *
                             (static_cast<double>(dalpha) + 2.0 * static_cast<double>(alpha_reg) * alpha);
  return std::max(static_cast<float>(updated), kAlphaFloor);
}

}  // namespace saliq
