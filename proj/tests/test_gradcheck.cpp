#include <doctest.h>

#include "gradcheck_suite.hpp"
#include "saliq/gradcheck.hpp"
#include "test_util.hpp"

using namespace saliq;

TEST_CASE("finite differences: linear function is exact") {
  Tensor x({4}, {0.3f, -0.7f, 1.1f, 0.0f});
  auto f = [](const Tensor& t) {
    double s = 0.0;
    for (int64_t i = 0; i < t.numel(); ++i) s += static_cast<double>(t[i]);
    return s;
  };
  const Tensor g = finite_difference_gradient(f, x, 1e-3);
  for (int64_t i = 0; i < g.numel(); ++i) CHECK(g[i] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("finite differences: d(x^2)/dx at 1 is 2") {
  Tensor x({1}, {1.0f});
  auto f = [](const Tensor& t) { return static_cast<double>(t[0]) * static_cast<double>(t[0]); };
  const Tensor g = finite_difference_gradient(f, x, 1e-3);
  CHECK(g[0] == doctest::Approx(2.0).epsilon(1e-5));
}

TEST_CASE("finite differences: constant function gives zeros") {
  Tensor x({3}, {1.0f, 2.0f, 3.0f});
  auto f = [](const Tensor&) { return 42.0; };
  const Tensor g = finite_difference_gradient(f, x, 1e-3);
  for (int64_t i = 0; i < g.numel(); ++i) CHECK(g[i] == 0.0f);
}

TEST_CASE("finite differences: non-positive step rejected") {
  Tensor x({1}, {1.0f});
  auto f = [](const Tensor& t) { return static_cast<double>(t[0]); };
  CHECK_THROWS_AS(finite_difference_gradient(f, x, 0.0), std::invalid_argument);
}

TEST_CASE("gradient check: every differentiable op matches finite differences") {
  // Short sweep per op; the acceptance suite runs the full 100-instance one.
  for (const auto& report : gradsuite::run_suite(8, /*seed=*/20240811)) {
    INFO("op: ", report.name, " max rel err: ", report.max_rel_err);
    CHECK(report.max_rel_err <= gradsuite::kTol);
  }
}
