#include <benchmark/benchmark.h>

#include <random>

#include "resnetplus/kernels.hpp"

namespace {

rnp::Tensor<float> filled(const rnp::Shape& shape, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(-1.0f, 1.0f);
  rnp::Tensor<float> t(shape);
  for (auto& v : t.data()) v = u(rng);
  return t;
}

// args: channels, spatial extent, kernel size, stride
void BM_Conv2d(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  const auto k = static_cast<std::size_t>(state.range(2));
  const int stride = static_cast<int>(state.range(3));
  const auto x = filled({1, c, hw, hw}, 1);
  const auto w = filled({c, c, k, k}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(rnp::conv2d(x, w, stride, static_cast<int>(k / 2)));
  const auto out = rnp::conv_out_extent(hw, k, stride, k / 2);
  state.counters["FLOP"] = benchmark::Counter(2.0 * c * c * k * k * out * out,
                                                 benchmark::Counter::kIsIterationInvariantRate);
}
BENCHMARK(BM_Conv2d)->Args({64, 56, 1, 1})->Args({64, 56, 3, 1})->Args({128, 28, 3, 2})->Args({256, 14, 3, 1});

void BM_Conv2dBackward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  const auto x = filled({4, c, hw, hw}, 3);
  const auto w = filled({c, c, 3, 3}, 4);
  const auto g = filled({4, c, hw, hw}, 5);
  for (auto _ : state) benchmark::DoNotOptimize(rnp::conv2d_backward(x, w, g, 1, 1));
}
BENCHMARK(BM_Conv2dBackward)->Args({16, 32})->Args({64, 16});

void BM_MaxPool(benchmark::State& state) {
  const auto x = filled({1, 64, 112, 112}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(rnp::pool2d(x, rnp::PoolKind::kMax, 3, 2, 1));
}
BENCHMARK(BM_MaxPool);

}  // namespace
