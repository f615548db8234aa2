#include <doctest.h>

#include <cmath>
#include <cstring>

#include "saliq/gradcheck.hpp"
#include "saliq/ops.hpp"
#include "saliq/saliency.hpp"
#include "test_util.hpp"

using namespace saliq;

namespace {

// Tiny dense-only model over flattened 2x2 single-channel inputs.
Model tiny_dense_model(Rng& rng) {
  Model m("flatten|dense:3", 1, 2, 6.0f);
  m.init_params(rng);
  return m;
}

Tensor one_sample_batch(const Tensor& image) {
  std::vector<int> shape = {1};
  for (int d : image.shape()) shape.push_back(d);
  return Tensor(shape, std::vector<float>(image.data(), image.data() + image.numel()));
}

}  // namespace

TEST_CASE("compute_saliency: constant logits give zero saliency") {
  Rng rng(41);
  Model m = tiny_dense_model(rng);
  // Zero out the dense weight so logits ignore the input.
  for (Tensor* p : m.parameters()) {
    if (p->ndim() == 2) {
      for (int64_t i = 0; i < p->numel(); ++i) (*p)[i] = 0.0f;
    }
  }
  Tensor x = testutil::random_tensor({4, 1, 2, 2}, rng, 0.0, 1.0);
  Tensor s = saliency_from_loss(m, x, {0, 1, 2, 0}, false);
  for (int64_t i = 0; i < s.numel(); ++i) CHECK(s[i] == 0.0f);
}

TEST_CASE("compute_saliency: matches finite differences on a dense model") {
  Rng rng(43);
  for (int trial = 0; trial < 50; ++trial) {
    Model m = tiny_dense_model(rng);
    Tensor x = testutil::random_tensor({2, 1, 2, 2}, rng, -1.0, 1.0);
    const std::vector<int> labels = testutil::random_labels(2, 3, rng);

    const Tensor analytic = saliency_from_loss(m, x, labels, false);
    auto f = [&](const Tensor& probe) { return ops::cross_entropy(m.forward(probe, false), labels); };
    const Tensor estimate = finite_difference_gradient(f, x, 1e-3);
    CHECK(gradient_rel_error(analytic, estimate) <= 1e-3);
  }
}

TEST_CASE("compute_saliency: scaling the loss scales S linearly") {
  Rng rng(47);
  Model m = tiny_dense_model(rng);
  Tensor x = testutil::random_tensor({2, 1, 2, 2}, rng, -1.0, 1.0);
  const std::vector<int> labels = {0, 2};

  const Tensor s1 = saliency_from_loss(m, x, labels, false);

  // Doubling the upstream loss doubles the gradient: compare against the
  // logit-sum variant scaled explicitly through a combine node.
  Tape tape;
  Model::TapeForward fwd = m.forward_tape(tape, x, false, true);
  NodeId ce = tape.cross_entropy(fwd.logits, labels);
  NodeId doubled = tape.combine({ce}, {2.0f}, 0.0f);
  tape.backward(doubled);
  const Tensor s2 = tape.grad(fwd.input);

  for (int64_t i = 0; i < s1.numel(); ++i) CHECK(s2[i] == doctest::Approx(2.0f * s1[i]).epsilon(1e-5));
}

TEST_CASE("adaptive_threshold: median split example") {
  Tensor s({1, 4}, {0.05f, 0.1f, 0.5f, 0.9f});
  Tensor x({1, 4}, {1.0f, 2.0f, 3.0f, 4.0f});
  const std::vector<float> eps = adaptive_threshold(s, 0.5f);
  REQUIRE(eps.size() == 1);
  CHECK(eps[0] == 0.1f);
  Tensor masked = mask_features(x, s, eps);
  CHECK(masked[0] == 0.0f);
  CHECK(masked[1] == 0.0f);
  CHECK(masked[2] == 3.0f);
  CHECK(masked[3] == 4.0f);
}

TEST_CASE("adaptive_threshold: rho 0 masks nothing even with zero saliency") {
  Tensor s({1, 4}, {0.0f, 0.1f, 0.5f, 0.9f});
  Tensor x({1, 4}, {1.0f, 2.0f, 3.0f, 4.0f});
  const std::vector<float> eps = adaptive_threshold(s, 0.0f);
  CHECK(eps[0] < 0.0f);
  Tensor masked = mask_features(x, s, eps);
  CHECK(std::memcmp(masked.data(), x.data(), sizeof(float) * 4) == 0);
}

TEST_CASE("mask from all-equal magnitudes: exactly half masked, lowest indices first") {
  Tensor s({1, 4}, {0.3f, 0.3f, 0.3f, 0.3f});
  Tensor x({1, 4}, {1.0f, 2.0f, 3.0f, 4.0f});
  Tensor masked = mask_bottom_fraction(x, s, 0.5f);
  CHECK(masked[0] == 0.0f);
  CHECK(masked[1] == 0.0f);
  CHECK(masked[2] == 3.0f);
  CHECK(masked[3] == 4.0f);
}

TEST_CASE("mask_features: no-op and full masks, bit-identical kept entries") {
  Rng rng(53);
  Tensor x = testutil::random_tensor({2, 8}, rng);
  Tensor s = testutil::random_tensor({2, 8}, rng);

  Tensor keep_all = mask_features(x, s, {-1.0f, -1.0f});
  CHECK(std::memcmp(keep_all.data(), x.data(), sizeof(float) * 16) == 0);

  Tensor drop_all = mask_features(x, s, {10.0f, 10.0f});
  for (int64_t i = 0; i < drop_all.numel(); ++i) CHECK(drop_all[i] == 0.0f);

  CHECK_THROWS_AS(mask_features(x, Tensor({2, 4}), {0.0f, 0.0f}), std::invalid_argument);
  CHECK_THROWS_AS(mask_features(x, s, {0.0f}), std::invalid_argument);
}

TEST_CASE("masking: exact count on tie-free tensors, idempotent, scale-invariant") {
  Rng rng(59);
  for (int trial = 0; trial < 30; ++trial) {
    const int batch = 2 + static_cast<int>(rng.uniform_int(3));
    const int feat = 8 + static_cast<int>(rng.uniform_int(25));
    const float rho = static_cast<float>(rng.uniform(0.1, 0.9));
    Tensor x = testutil::random_tensor({batch, feat}, rng);
    Tensor s = testutil::random_tensor({batch, feat}, rng);  // ties have ~zero probability

    const std::vector<float> eps = adaptive_threshold(s, rho);
    Tensor masked = mask_features(x, s, eps);
    const int64_t expect = static_cast<int64_t>(std::floor(rho * feat));
    for (int b = 0; b < batch; ++b) {
      int64_t zeroed = 0;
      for (int j = 0; j < feat; ++j) {
        const int64_t i = static_cast<int64_t>(b) * feat + j;
        if (std::fabs(s[i]) <= eps[static_cast<size_t>(b)]) {
          CHECK(masked[i] == 0.0f);
          ++zeroed;
        } else {
          CHECK(masked[i] == x[i]);
        }
      }
      CHECK(zeroed == expect);
    }

    // rank mask agrees with the threshold mask when tie-free
    Tensor ranked = mask_bottom_fraction(x, s, rho);
    CHECK(std::memcmp(ranked.data(), masked.data(), sizeof(float) * static_cast<size_t>(x.numel())) == 0);

    // masking an already-masked tensor with the same (S, eps) is a no-op
    Tensor twice = mask_features(masked, s, eps);
    CHECK(std::memcmp(twice.data(), masked.data(), sizeof(float) * static_cast<size_t>(x.numel())) == 0);

    // positive rescaling of the loss rescales S but not the mask
    Tensor scaled = s;
    for (int64_t i = 0; i < scaled.numel(); ++i) scaled[i] *= 8.0f;
    Tensor masked_scaled = mask_features(x, scaled, adaptive_threshold(scaled, rho));
    CHECK(std::memcmp(masked_scaled.data(), masked.data(), sizeof(float) * static_cast<size_t>(x.numel())) == 0);
  }
}

TEST_CASE("saliency_l1: examples") {
  CHECK(saliency_l1(Tensor({1, 3})) == 0.0);
  CHECK(saliency_l1(Tensor({1, 3}, {1.0f, -2.0f, 3.0f})) == doctest::Approx(6.0));
  Tensor s({2, 2}, {1.0f, -1.0f, 2.0f, -2.0f});
  const double base = saliency_l1(s);
  for (int64_t i = 0; i < s.numel(); ++i) s[i] *= -3.0f;
  CHECK(saliency_l1(s) == doctest::Approx(3.0 * base).epsilon(1e-6));
}

TEST_CASE("export_saliency_map: normalization and determinism") {
  testutil::TempDir tmp("pgm");

  Tensor zero({1, 4, 4});
  export_saliency_map(zero, tmp.str("zero.pgm"));
  const auto zero_bytes = testutil::read_file_bytes(tmp.str("zero.pgm"));
  const std::string header = "P5\n4 4\n255\n";
  REQUIRE(zero_bytes.size() == header.size() + 16);
  CHECK(std::memcmp(zero_bytes.data(), header.data(), header.size()) == 0);
  for (size_t i = header.size(); i < zero_bytes.size(); ++i) CHECK(zero_bytes[i] == 0);

  Tensor hot({1, 2, 2});
  hot[3] = -0.4f;  // single hot pixel, negative to exercise the magnitude
  export_saliency_map(hot, tmp.str("hot.pgm"));
  const auto hot_bytes = testutil::read_file_bytes(tmp.str("hot.pgm"));
  const std::string hot_header = "P5\n2 2\n255\n";
  REQUIRE(hot_bytes.size() == hot_header.size() + 4);
  CHECK(hot_bytes[hot_header.size() + 0] == 0);
  CHECK(hot_bytes[hot_header.size() + 1] == 0);
  CHECK(hot_bytes[hot_header.size() + 2] == 0);
  CHECK(hot_bytes[hot_header.size() + 3] == 255);

  Rng rng(61);
  Tensor s = testutil::random_tensor({3, 5, 5}, rng);
  export_saliency_map(s, tmp.str("a.pgm"));
  Tensor scaled(s.shape());
  for (int64_t i = 0; i < s.numel(); ++i) scaled[i] = 17.0f * s[i];
  export_saliency_map(scaled, tmp.str("b.pgm"));
  CHECK(testutil::read_file_bytes(tmp.str("a.pgm")) == testutil::read_file_bytes(tmp.str("b.pgm")));

  CHECK_THROWS(export_saliency_map(s, tmp.str("missing_dir/x.pgm")));
}
