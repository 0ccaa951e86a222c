#include <benchmark/benchmark.h>

#include "resnetplus/trainer.hpp"

namespace {

// arg 0: 1 = ResNet50+, 0 = ResNet50; arg 1: width multiplier in percent; arg 2: input side
void BM_Forward(benchmark::State& state) {
  const double width = static_cast<double>(state.range(1)) / 100.0;
  const auto cfg = state.range(0) ? rnp::ModelConfig::resnet_plus(50, 3, width) : rnp::ModelConfig::resnet(50, 3, width);
  rnp::ResNetPlus<float> model(cfg, 0);
  const auto side = static_cast<std::size_t>(state.range(2));
  const rnp::Tensor<float> x({1, 3, side, side}, 0.5f);
  for (auto _ : state) benchmark::DoNotOptimize(rnp::predict_proba(model, x));
  state.SetLabel(cfg.label());
}
BENCHMARK(BM_Forward)->Args({0, 25, 32})->Args({1, 25, 32})->Args({0, 100, 224})->Args({1, 100, 224})
    ->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  rnp::ResNetPlus<float> model(rnp::ModelConfig::resnet_plus(50, 3, 0.25), 0);
  auto params = model.parameters();
  rnp::Sgd sgd(0.9);
  const rnp::Tensor<float> x({16, 3, 32, 32}, 0.5f);
  std::vector<int> labels(16);
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 3);
  for (auto _ : state) {
    rnp::Tape<float> tape;
    rnp::Tape<float>::Scope scope(tape);
    for (auto& [n, p] : params) p.zero_grad();
    auto loss = rnp::cross_entropy(model.forward(rnp::Var<float>(x), rnp::Mode::kTrain), labels);
    tape.backward(loss);
    sgd.step(params, 0.01);
  }
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
