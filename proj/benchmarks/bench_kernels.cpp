#include <benchmark/benchmark.h>

#include "saliq/ops.hpp"
#include "saliq/quant.hpp"
#include "saliq/rng.hpp"
#include "saliq/tensor.hpp"

using namespace saliq;

namespace {

Tensor random_tensor(std::vector<int> shape, uint64_t seed) {
  Rng rng(seed);
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  const int c = static_cast<int>(state.range(1));
  const int o = static_cast<int>(state.range(2));
  const int hw = static_cast<int>(state.range(3));
  Tensor x = random_tensor({n, c, hw, hw}, 1);
  Tensor w = random_tensor({o, c, 3, 3}, 2);
  for (auto _ : state) {
    Tensor y = ops::conv2d(x, w, 1, 1);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * 2ll * n * o * c * 9 * hw * hw);
}
BENCHMARK(BM_Conv2dForward)->Args({16, 3, 16, 64})->Args({16, 16, 32, 32})->Args({16, 32, 64, 16});

void BM_Conv2dBackward(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  Tensor x = random_tensor({n, 16, 32, 32}, 3);
  Tensor w = random_tensor({32, 16, 3, 3}, 4);
  Tensor dy = random_tensor({n, 32, 32, 32}, 5);
  for (auto _ : state) {
    Tensor dx, dw;
    ops::conv2d_backward(x, w, 1, 1, dy, &dx, &dw);
    benchmark::DoNotOptimize(dx.data());
  }
}
BENCHMARK(BM_Conv2dBackward)->Arg(8)->Arg(32);

void BM_Dense(benchmark::State& state) {
  Tensor x = random_tensor({128, 4096}, 6);
  Tensor w = random_tensor({4096, 128}, 7);
  Tensor b = random_tensor({128}, 8);
  for (auto _ : state) {
    Tensor y = ops::dense(x, w, b);
    benchmark::DoNotOptimize(y.data());
  }
  state.SetItemsProcessed(state.iterations() * 2ll * 128 * 4096 * 128);
}
BENCHMARK(BM_Dense);

void BM_PactQuantize(benchmark::State& state) {
  Tensor y = random_tensor({1 << 20}, 9);
  Tensor clipped = pact_forward(y, 1.0f);
  for (auto _ : state) {
    Tensor q = pact_quantize(clipped, 1.0f, static_cast<int>(state.range(0)));
    benchmark::DoNotOptimize(q.data());
  }
  state.SetItemsProcessed(state.iterations() * (1 << 20));
}
BENCHMARK(BM_PactQuantize)->Arg(2)->Arg(8);

void BM_PackWeights(benchmark::State& state) {
  Tensor w = random_tensor({1 << 18}, 10);
  Tensor q = quantize_weights_qat(w, 4);
  const float scale = weight_scale(w, 4);
  for (auto _ : state) {
    auto bytes = pack_weights(q, 4, scale);
    benchmark::DoNotOptimize(bytes.data());
  }
  state.SetItemsProcessed(state.iterations() * (1 << 18));
}
BENCHMARK(BM_PackWeights);

}  // namespace

BENCHMARK_MAIN();
