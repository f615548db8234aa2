#include <doctest.h>

#include <cstring>

#include "saliq/tape.hpp"
#include "saliq/tensor.hpp"
#include "test_util.hpp"

using namespace saliq;

TEST_CASE("tensor shape/data invariants") {
  Tensor t({2, 3}, 1.5f);
  CHECK(t.numel() == 6);
  CHECK(t.shape_str() == "[2,3]");
  CHECK_THROWS(Tensor({2, 3}, std::vector<float>{1.0f, 2.0f}));
  CHECK_THROWS(Tensor({0, 3}));
  CHECK(t.all_finite());
  t[0] = std::numeric_limits<float>::infinity();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("evaluate: identity graph returns inputs unchanged") {
  Tape tape;
  NodeId x = tape.input(Tensor({3}, {1.0f, 2.0f, 3.0f}), false);
  const Tensor& v = tape.value(x);
  CHECK(v[0] == 1.0f);
  CHECK(v[1] == 2.0f);
  CHECK(v[2] == 3.0f);
}

TEST_CASE("evaluate: add(x,x) doubles") {
  Tape tape;
  NodeId x = tape.input(Tensor({2}, {1.0f, 2.0f}), false);
  NodeId y = tape.add(x, x);
  CHECK(tape.value(y)[0] == 2.0f);
  CHECK(tape.value(y)[1] == 4.0f);
}

TEST_CASE("evaluate: identity matmul") {
  Tape tape;
  NodeId eye = tape.input(Tensor({2, 2}, {1.0f, 0.0f, 0.0f, 1.0f}), false);
  NodeId v = tape.input(Tensor({2, 1}, {3.0f, 4.0f}), false);
  NodeId y = tape.matmul(eye, v);
  CHECK(tape.value(y)[0] == 3.0f);
  CHECK(tape.value(y)[1] == 4.0f);
}

TEST_CASE("evaluate: shape mismatch names the op and shapes") {
  Tape tape;
  NodeId a = tape.input(Tensor({2}), false);
  NodeId b = tape.input(Tensor({3}), false);
  CHECK_THROWS_WITH_AS(tape.add(a, b), doctest::Contains("add"), std::invalid_argument);
  try {
    tape.add(a, b);
  } catch (const std::invalid_argument& e) {
    CHECK(std::string(e.what()).find("[2]") != std::string::npos);
    CHECK(std::string(e.what()).find("[3]") != std::string::npos);
  }
}

TEST_CASE("evaluate: non-finite input rejected") {
  Tape tape;
  Tensor bad({2}, {1.0f, std::numeric_limits<float>::quiet_NaN()});
  CHECK_THROWS_AS(tape.input(std::move(bad), false), std::invalid_argument);
}

TEST_CASE("backward: sum gives all-ones gradient") {
  Tape tape;
  NodeId x = tape.input(Tensor({3}, {5.0f, -2.0f, 0.5f}), true);
  NodeId loss = tape.sum(x);
  tape.backward(loss);
  const Tensor& g = tape.grad(x);
  for (int i = 0; i < 3; ++i) CHECK(g[i] == 1.0f);
}

TEST_CASE("backward: d sum(x*x)/dx = 2x") {
  Tape tape;
  NodeId x = tape.input(Tensor({2}, {2.0f, 3.0f}), true);
  NodeId loss = tape.sum(tape.mul(x, x));
  tape.backward(loss);
  const Tensor& g = tape.grad(x);
  CHECK(g[0] == doctest::Approx(4.0f));
  CHECK(g[1] == doctest::Approx(6.0f));
}

TEST_CASE("backward: matmul transpose rule") {
  Tape tape;
  NodeId w = tape.input(Tensor({1, 2}, {1.0f, 2.0f}), false);
  NodeId x = tape.input(Tensor({2, 1}, {5.0f, 7.0f}), true);
  NodeId loss = tape.sum(tape.matmul(w, x));
  tape.backward(loss);
  const Tensor& g = tape.grad(x);
  CHECK(g[0] == doctest::Approx(1.0f));
  CHECK(g[1] == doctest::Approx(2.0f));
}

TEST_CASE("backward: non-scalar loss rejected") {
  Tape tape;
  NodeId x = tape.input(Tensor({3}, {1.0f, 2.0f, 3.0f}), true);
  CHECK_THROWS_AS(tape.backward(x), std::invalid_argument);
}

TEST_CASE("backward before any forward is an error") {
  Tape tape;
  CHECK_THROWS_AS(tape.backward(0), std::invalid_argument);
  CHECK_THROWS_AS(tape.grad(0), std::invalid_argument);
}

TEST_CASE("backward linearity: grad of summed losses equals sum of grads") {
  saliq::Rng rng(7);
  Tensor xv = testutil::random_tensor({4, 3}, rng);
  Tensor av = testutil::random_tensor({4, 3}, rng);

  Tape joint;
  NodeId x = joint.input(xv, true);
  NodeId a = joint.input(av, false);
  NodeId l1 = joint.sum(joint.mul(x, a));
  NodeId l2 = joint.sum(joint.mul(x, x));
  NodeId total = joint.combine({l1, l2}, {1.0f, 1.0f}, 0.0f);
  joint.backward(total);
  const Tensor g_joint = joint.grad(x);

  Tape t1;
  NodeId x1 = t1.input(xv, true);
  t1.backward(t1.sum(t1.mul(x1, t1.input(av, false))));
  const Tensor g1 = t1.grad(x1);

  Tape t2;
  NodeId x2 = t2.input(xv, true);
  t2.backward(t2.sum(t2.mul(x2, x2)));
  const Tensor g2 = t2.grad(x2);

  for (int64_t i = 0; i < g_joint.numel(); ++i) {
    CHECK(g_joint[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-6));
  }
}

TEST_CASE("determinism: repeated evaluate+backward is bit-identical") {
  saliq::Rng rng(11);
  Tensor xv = testutil::random_tensor({3, 4}, rng);
  Tensor wv = testutil::random_tensor({4, 2}, rng);

  auto run = [&](Tensor* grad_out) {
    Tape tape;
    NodeId x = tape.input(xv, true);
    NodeId w = tape.input(wv, true);
    NodeId y = tape.matmul(x, w);
    NodeId loss = tape.sum(tape.mul(y, y));
    tape.backward(loss);
    *grad_out = tape.grad(x);
    return tape.value(loss)[0];
  };

  Tensor g1, g2;
  const float v1 = run(&g1);
  const float v2 = run(&g2);
  CHECK(std::memcmp(&v1, &v2, sizeof(float)) == 0);
  REQUIRE(g1.numel() == g2.numel());
  CHECK(std::memcmp(g1.data(), g2.data(), sizeof(float) * static_cast<size_t>(g1.numel())) == 0);
}

TEST_CASE("multiple backward calls reset gradients") {
  Tape tape;
  NodeId x = tape.input(Tensor({2}, {1.0f, 2.0f}), true);
  NodeId loss = tape.sum(x);
  tape.backward(loss);
  tape.backward(loss);
  const Tensor& g = tape.grad(x);
  CHECK(g[0] == 1.0f);
  CHECK(g[1] == 1.0f);
}
