#pragma once

#include <functional>

#include "saliq/tensor.hpp"

namespace saliq {

using ScalarFn = std::function<double(const Tensor&)>;

/// Central-difference gradient estimate (f(x + h e_i) - f(x - h e_i)) / (2h)
/// per element. Independent of the tape: it only re-evaluates f.
Tensor finite_difference_gradient(const ScalarFn& f, const Tensor& x, double h);

/// Infinity-norm relative error between an analytic gradient and the
/// finite-difference estimate, ||a - b||_inf / max(||a||_inf, ||b||_inf, floor).
double gradient_rel_error(const Tensor& analytic, const Tensor& estimate, double floor = 1e-6);

}  // namespace saliq
