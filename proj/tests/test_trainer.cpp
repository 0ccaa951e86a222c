#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>

#include "oracles.hpp"
#include "resnetplus/trainer.hpp"

using namespace rnp;
namespace fs = std::filesystem;

namespace {

PreprocessOptions small_prep() {
  PreprocessOptions p;
  p.image_size = 32;
  p.policy = AugmentPolicy::synthetic();
  return p;
}

TrainConfig small_train() {
  TrainConfig c;
  c.epochs = 2;
  c.batch_size = 4;
  c.seed = 5;
  return c;
}

}  // namespace

TEST(Schedule, CosineValues) {
  TrainConfig c;
  const double pi = std::numbers::pi;
  EXPECT_DOUBLE_EQ(cosine_lr(0, c), 0.01);
  EXPECT_NEAR(cosine_lr(20, c), 5.0005e-3, 1e-15);
  const double closed39 = 1e-6 + (0.01 - 1e-6) * (1 + std::cos(pi * 39 / 40)) / 2;
  EXPECT_NEAR(cosine_lr(39, c), closed39, 1e-15);
  // Warm restart, unless disabled.
  EXPECT_DOUBLE_EQ(cosine_lr(40, c), 0.01);
  EXPECT_DOUBLE_EQ(cosine_lr(61, c), cosine_lr(21, c));
  c.no_restart = true;
  EXPECT_DOUBLE_EQ(cosine_lr(40, c), 1e-6);
  EXPECT_DOUBLE_EQ(cosine_lr(39, c), closed39);
  EXPECT_THROW(cosine_lr(-1, c), ArgumentError);
}

TEST(Schedule, MonotoneWithinACycle) {
  TrainConfig c;
  for (int e = 1; e < 40; ++e) EXPECT_LT(cosine_lr(e, c), cosine_lr(e - 1, c));
}

TEST(Ema, ClosedFormFromZero) {
  Tensor<double> shadow({3}, 0.0);
  const Tensor<double> one({3}, 1.0);
  for (int n = 1; n <= 500; ++n) {
    ema_update(shadow, one, 0.995);
    ASSERT_NEAR(shadow[1], 1.0 - std::pow(0.995, n), 1e-12) << n;
  }
  EXPECT_THROW(ema_update(shadow, Tensor<double>({2}, 1.0), 0.9), DimensionError);
}

TEST(Ema, ShadowsParametersAndBuffers) {
  ResNetPlus<float> m(ModelConfig::resnet_plus(50, 3, 0.125), 1);
  Ema ema(m, 0.5);
  const auto start = m.state_dict();
  EXPECT_EQ(ema.shadow(), start);
  for (auto& [n, p] : m.parameters()) p.mutable_value().fill(1.0f);
  StateVisitor<float> stem_buffers;
  stem_buffers.parameter = [](const std::string&, Var<float>&) {};
  stem_buffers.buffer = [](const std::string&, Tensor<float>& b) { b.fill(3.0f); };
  m.stem().visit("stem", stem_buffers);
  ema.update(m);
  const auto& sh = ema.shadow();
  ASSERT_EQ(sh.size(), start.size());
  for (std::size_t i = 0; i < sh.size(); ++i) {
    const bool stem_buffer = sh[i].first.rfind("stem.", 0) == 0 && sh[i].first.find("running") != std::string::npos;
    const bool param = sh[i].first.find("running") == std::string::npos;
    const float now = param ? 1.0f : stem_buffer ? 3.0f : start[i].second[0];
    EXPECT_FLOAT_EQ(sh[i].second[0], 0.5f * start[i].second[0] + 0.5f * now) << sh[i].first;
  }
}

TEST(Sgd, HeavyBallOracle) {
  Tensor<double> w({2}, std::vector<double>{1.0, -2.0});
  Tensor<double> v({2}, 0.0);
  const Tensor<double> g({2}, std::vector<double>{0.5, 0.25});
  double vo[2] = {0, 0}, wo[2] = {1.0, -2.0};
  for (int step = 0; step < 5; ++step) {
    sgd_step(w, g, v, 0.9, 0.1);
    for (int i = 0; i < 2; ++i) {
      vo[i] = 0.9 * vo[i] + g[i];
      wo[i] -= 0.1 * vo[i];
      ASSERT_NEAR(w[i], wo[i], 1e-15);
    }
  }
}

TEST(CrossEntropy, MatchesLogSumExpOracleAndGradient) {
  const auto z = oracle::random({4, 3}, 1, -5, 5);
  const std::vector<int> y = {0, 2, 1, 2};
  Var<double> logits(z, true);
  Tape<double> tape;
  Var<double> loss;
  {
    Tape<double>::Scope s(tape);
    loss = cross_entropy(logits, y);
    tape.backward(loss);
  }
  double want = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    double m = -1e300, se = 0;
    for (std::size_t k = 0; k < 3; ++k) m = std::max(m, z.at(i, k));
    for (std::size_t k = 0; k < 3; ++k) se += std::exp(z.at(i, k) - m);
    want += -(z.at(i, static_cast<std::size_t>(y[i])) - m - std::log(se)) / 4;
    for (std::size_t k = 0; k < 3; ++k) {
      const double p = std::exp(z.at(i, k) - m) / se;
      EXPECT_NEAR(logits.grad().at(i, k), (p - (static_cast<int>(k) == y[i])) / 4, 1e-14);
    }
  }
  EXPECT_NEAR(loss.value().item(), want, 1e-14);

  const Var<double> huge(Tensor<double>({1, 2}, std::vector<double>{1e4, -1e4}));
  EXPECT_NEAR(cross_entropy(huge, {1}).value().item(), 2e4, 1e-9);
  EXPECT_THROW(cross_entropy(huge, {2}), ArgumentError);
  EXPECT_THROW(cross_entropy(huge, {0, 1}), DimensionError);
}

TEST(FirstLoss, ZeroClassifierGivesChanceLevel) {
  ResNetPlus<float> m(ModelConfig::resnet_plus(50, 3, 0.125), 2);
  m.fc().weight().mutable_value().fill(0.0f);
  m.fc().bias().mutable_value().fill(0.0f);
  const auto ds = synth_dataset(3, 4, 32, 0);
  EXPECT_NEAR(first_batch_loss(m, ds, small_train(), small_prep()), std::log(3.0), 1e-6);
}

TEST(Train, DivergenceIsReported) {
  ResNetPlus<float> m(ModelConfig::resnet_plus(50, 3, 0.125), 3);
  m.fc().bias().mutable_value()[0] = std::numeric_limits<float>::quiet_NaN();
  const auto s = synth_splits(3, 6, 32, 0);
  EXPECT_THROW(train(m, s.train, s.val, small_train(), small_prep()), DivergenceError);
}

TEST(Train, ConfigValidation) {
  auto c = small_train();
  c.ema_decay = 1.0;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = small_train();
  c.eta_min = 1.0;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = small_train();
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ArgumentError);
}

TEST(Train, DeterministicRecordsAndCheckpointBytes) {
  const auto s = synth_splits(3, 9, 32, 1);
  const auto dir = fs::temp_directory_path() / "resnetplus_test_trainer";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<std::string> csv, blobs;
  for (int run = 0; run < 2; ++run) {
    ResNetPlus<float> m(ModelConfig::resnet_plus(50, 3, 0.125), 4);
    auto c = small_train();
    c.checkpoint_path = (dir / ("run" + std::to_string(run) + ".ckpt")).string();
    const auto rep = train(m, s.train, s.val, c, small_prep());
    ASSERT_EQ(rep.epochs.size(), 2u);
    EXPECT_GE(rep.best_epoch, 0);
    EXPECT_EQ(rep.steps, 2u * 2u);  // 9 samples in batches of 4, 4, 1; the single is skipped
    EXPECT_EQ(rep.skipped_batches, 2u);
    csv.push_back(rep.to_csv());
    std::ifstream in(c.checkpoint_path, std::ios::binary);
    blobs.emplace_back(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  EXPECT_EQ(csv[0], csv[1]);
  EXPECT_EQ(blobs[0], blobs[1]);
  EXPECT_FALSE(blobs[0].empty());
  EXPECT_EQ(csv[0].substr(0, csv[0].find('\n')), "epoch,lr,train_loss,train_acc,val_acc");
}

TEST(Train, WeightSwapRestoresOriginalState) {
  ResNetPlus<float> m(ModelConfig::resnet_plus(50, 3, 0.125), 5);
  ResNetPlus<float> other(ModelConfig::resnet_plus(50, 3, 0.125), 6);
  const auto before = m.state_dict();
  {
    WeightSwap swap(m, other.state_dict());
    EXPECT_EQ(m.state_dict(), other.state_dict());
  }
  EXPECT_EQ(m.state_dict(), before);
}

TEST(Evaluate, ProbabilitiesAndReport) {
  ResNetPlus<float> m(ModelConfig::resnet_plus(50, 3, 0.125), 7);
  const auto ds = synth_dataset(3, 2, 32, 0, Split::kTest);
  const auto x = oracle::random<float>({2, 3, 32, 32}, 8);
  const auto p = predict_proba(m, x);
  ASSERT_EQ(p.shape(), (Shape{2, 3}));
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(p.at(i, 0) + p.at(i, 1) + p.at(i, 2), 1.0, 1e-9);
  const auto r = evaluate(m, ds, small_prep(), "raw");
  EXPECT_EQ(r.confusion.total(), 6u);
  EXPECT_EQ(r.latency.samples, 6u);
  EXPECT_EQ(r.weights, "raw");
  EXPECT_DOUBLE_EQ(r.metrics.accuracy, accuracy(m, ds, small_prep()));
}
