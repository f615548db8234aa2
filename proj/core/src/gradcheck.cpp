#include "saliq/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

namespace saliq {

Tensor finite_difference_gradient(const ScalarFn& f, const Tensor& x, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite_difference_gradient: step size must be positive");
  Tensor probe = x;
  Tensor grad(x.shape());
  for (int64_t i = 0; i < x.numel(); ++i) {
    const float orig = probe[i];
    const float up = static_cast<float>(static_cast<double>(orig) + h);
    const float down = static_cast<float>(static_cast<double>(orig) - h);
    probe[i] = up;
    const double hi = f(probe);
    probe[i] = down;
    const double lo = f(probe);
    probe[i] = orig;
    // Divide by the step actually applied after float32 rounding of the
    // probe points; dividing by 2h would fold that rounding into the result.
    grad[i] = static_cast<float>((hi - lo) / (static_cast<double>(up) - static_cast<double>(down)));
  }
  return grad;
}

double gradient_rel_error(const Tensor& analytic, const Tensor& estimate, double floor) {
  if (!analytic.same_shape(estimate)) {
    throw std::invalid_argument("gradient_rel_error: shape mismatch " + analytic.shape_str() + " vs " +
                                estimate.shape_str());
  }
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (int64_t i = 0; i < analytic.numel(); ++i) {
    diff = std::max(diff, std::fabs(static_cast<double>(analytic[i]) - static_cast<double>(estimate[i])));
    na = std::max(na, std::fabs(static_cast<double>(analytic[i])));
    nb = std::max(nb, std::fabs(static_cast<double>(estimate[i])));
  }
  return diff / std::max({na, nb, floor});
}

}  // namespace saliq
