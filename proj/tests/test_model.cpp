#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "resnetplus/checkpoint.hpp"
#include "resnetplus/model.hpp"

using namespace rnp;
namespace fs = std::filesystem;

namespace {

ModelConfig flags(unsigned bits, double width = 0.125) {
  ModelConfig c = ModelConfig::resnet(50, 3, width);
  c.cbam = bits & 1u;
  c.sco = bits & 2u;
  c.replace_stem = bits & 4u;
  c.modify_shortcut = bits & 8u;
  c.replace_maxpool = bits & 16u;
  return c;
}

fs::path temp_file(const std::string& name) {
  auto dir = fs::temp_directory_path() / "resnetplus_test_model";
  fs::create_directories(dir);
  return dir / name;
}

}  // namespace

// torchvision.models.resnet50(num_classes=3): 23,508,032 backbone + 2048*3 + 3.
TEST(Model, ResNet50ParameterCountMatchesReference) {
  ResNetPlus<float> m(ModelConfig::resnet(50, 3), 0);
  EXPECT_EQ(m.param_count(), 23514179u);
  ResNetPlus<float> deep(ModelConfig::resnet(101, 3), 0);
  EXPECT_EQ(deep.param_count(), 42506307u);
}

TEST(Model, PlusVariantHasMoreParameters) {
  ResNetPlus<float> base(ModelConfig::resnet(50, 3), 0);
  ResNetPlus<float> plus(ModelConfig::resnet_plus(50, 3), 0);
  EXPECT_GT(plus.param_count(), base.param_count());
  const auto b = plus.param_breakdown();
  EXPECT_EQ(b.total(), plus.param_count());
  EXPECT_GT(b.cbam, 0u);
  EXPECT_EQ(base.param_breakdown().cbam, 0u);
}

TEST(Model, LabelsAndValidation) {
  EXPECT_EQ(ModelConfig::resnet(50).label(), "ResNet50");
  EXPECT_EQ(ModelConfig::resnet_plus(101).label(), "ResNet101+");
  auto c = ModelConfig::resnet(50);
  c.depth = 34;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = ModelConfig::resnet(50);
  c.num_classes = 1;
  EXPECT_THROW(c.validate(), ArgumentError);
  c = ModelConfig::resnet_plus(50, 3, 0.01);
  EXPECT_THROW(c.validate(), ArgumentError);
}

TEST(Model, StemDownsamplesByFourForEveryVariant) {
  for (bool replace_stem : {false, true}) {
    for (bool replace_pool : {false, true}) {
      ModelConfig c = ModelConfig::resnet(50, 3);
      c.replace_stem = replace_stem;
      c.replace_maxpool = replace_pool;
      Rng rng(1);
      Stem<float> stem(c, rng);
      const auto y = stem.forward(Var<float>(oracle::random<float>({1, 3, 224, 224}, 2)), Mode::kEval);
      EXPECT_EQ(y.shape(), (Shape{1, 64, 56, 56})) << replace_stem << replace_pool;
      EXPECT_EQ(stem.conv_count(), replace_stem ? 3u : 1u);
    }
  }
}

TEST(Model, AllThirtyTwoFlagCombinationsRunForwardAndBackward) {
  const auto x = oracle::random<float>({2, 3, 32, 32}, 3);
  for (unsigned bits = 0; bits < 32; ++bits) {
    ResNetPlus<float> m(flags(bits), bits);
    Tape<float> tape;
    Tape<float>::Scope scope(tape);
    auto logits = m.forward(Var<float>(x), Mode::kTrain);
    ASSERT_EQ(logits.shape(), (Shape{2, 3})) << "flags " << bits;
    ASSERT_TRUE(logits.value().all_finite());
    tape.backward(ag::sum(logits));
    for (auto& [name, p] : m.parameters()) {
      ASSERT_TRUE(p.has_grad()) << "flags " << bits << " " << name;
      ASSERT_TRUE(p.grad().all_finite()) << name;
    }
  }
}

TEST(Model, ShortcutKindFollowsFlags) {
  auto c = ModelConfig::resnet(50, 3, 0.25);
  ResNetPlus<float> plain(c, 0);
  EXPECT_EQ(plain.stages()[0][0].shortcut_kind(), ShortcutKind::kProjection);
  EXPECT_EQ(plain.stages()[0][1].shortcut_kind(), ShortcutKind::kIdentity);
  EXPECT_EQ(plain.stages()[1][0].shortcut_kind(), ShortcutKind::kProjection);
  c.modify_shortcut = true;
  ResNetPlus<float> d(c, 0);
  // Stage 1 has stride 1: nothing to pool, so it keeps the plain projection.
  EXPECT_EQ(d.stages()[0][0].shortcut_kind(), ShortcutKind::kProjection);
  EXPECT_EQ(d.stages()[1][0].shortcut_kind(), ShortcutKind::kResnetD);
}

TEST(Model, StrideSitsOnThreeByThreeWithSco) {
  auto c = ModelConfig::resnet(50, 3, 0.25);
  ResNetPlus<float> off(c, 0);
  EXPECT_EQ(off.stages()[1][0].conv1().stride(), 2);
  EXPECT_EQ(off.stages()[1][0].conv2().stride(), 1);
  c.sco = true;
  ResNetPlus<float> on(c, 0);
  EXPECT_EQ(on.stages()[1][0].conv1().stride(), 1);
  EXPECT_EQ(on.stages()[1][0].conv2().stride(), 2);
}

// A strided 1x1 projection only sees even coordinates; avg-pool first sees all of them.
TEST(Model, ImpulseAtOddCoordinateReachesOnlyTheResnetDShortcut) {
  for (bool ms : {true, false}) {
    auto c = ModelConfig::resnet(50, 3, 0.25);
    c.modify_shortcut = ms;
    Rng rng(4);
    Bottleneck<double> block(64, 32, 2, c, rng);
    for (std::size_t y = 1; y < 8; y += 2) {
      for (std::size_t x = 1; x < 8; x += 2) {
        Tensor<double> in({1, 64, 8, 8}, 0.0);
        for (std::size_t ch = 0; ch < 64; ++ch) in.at(0, ch, y, x) = 1.0;
        const auto out = block.shortcut(Var<double>(in), Mode::kEval).value();
        ASSERT_EQ(out.shape(), (Shape{1, 128, 4, 4}));
        double mag = 0;
        for (double v : out.data()) mag = std::max(mag, std::abs(v));
        if (ms) {
          EXPECT_GT(mag, 0.0) << "(" << y << "," << x << ")";
        } else {
          EXPECT_EQ(mag, 0.0) << "(" << y << "," << x << ")";
        }
      }
    }
  }
}

TEST(Model, OddSpatialSizeBeforeResnetDBlockIsRejected) {
  auto c = ModelConfig::resnet(50, 3, 0.25);
  c.modify_shortcut = true;
  c.sco = true;
  Rng rng(5);
  Bottleneck<float> block(64, 32, 2, c, rng);
  EXPECT_THROW(block.forward(Var<float>(oracle::random<float>({1, 64, 7, 7}, 6)), Mode::kEval),
               DimensionError);
  EXPECT_NO_THROW(block.forward(Var<float>(oracle::random<float>({1, 64, 8, 8}, 6)), Mode::kEval));
}

TEST(Model, RejectsTinyOrMisshapenInputs) {
  ResNetPlus<float> m(ModelConfig::resnet_plus(50, 3, 0.125), 0);
  EXPECT_THROW(m.forward(Var<float>(oracle::random<float>({1, 3, 16, 16}, 7)), Mode::kEval), DimensionError);
  EXPECT_THROW(m.forward(Var<float>(oracle::random<float>({1, 1, 32, 32}, 7)), Mode::kEval), DimensionError);
}

TEST(Model, SameSeedSameWeights) {
  ResNetPlus<float> a(ModelConfig::resnet_plus(50, 3, 0.125), 11);
  ResNetPlus<float> b(ModelConfig::resnet_plus(50, 3, 0.125), 11);
  ResNetPlus<float> c(ModelConfig::resnet_plus(50, 3, 0.125), 12);
  EXPECT_EQ(a.state_dict(), b.state_dict());
  EXPECT_NE(a.state_dict(), c.state_dict());
}

TEST(Model, CopyStateAcrossPrecisions) {
  const auto cfg = ModelConfig::resnet_plus(50, 3, 0.125);
  ResNetPlus<float> f(cfg, 1);
  ResNetPlus<double> d(cfg, 2);
  copy_state(f, d);
  const auto x = oracle::random<float>({2, 3, 32, 32}, 8);
  const auto yf = f.forward(Var<float>(x), Mode::kEval).value();
  const auto yd = d.forward(Var<double>(x.cast<double>()), Mode::kEval).value();
  EXPECT_LT(oracle::max_abs_diff(yf.cast<double>(), yd), 1e-4);
}

TEST(Model, LoadStateRejectsUnknownOrMisshapenTensors) {
  ResNetPlus<float> m(ModelConfig::resnet_plus(50, 3, 0.125), 0);
  auto sd = m.state_dict();
  sd.emplace_back("nonexistent.weight", Tensor<float>({1}));
  EXPECT_THROW(m.load_state(sd), CheckpointMismatch);
  ResNetPlus<float> other(ModelConfig::resnet_plus(50, 4, 0.125), 0);
  try {
    m.load_state(other.state_dict());
    FAIL() << "expected mismatch";
  } catch (const CheckpointMismatch& e) {
    EXPECT_EQ(e.tensor().rfind("fc.", 0), 0u) << e.tensor();
  }
}

// --- checkpoints ----------------------------------------------------------------------------

TEST(Checkpoint, RoundTripKeepsEveryTensorAndTheConfig) {
  auto cfg = ModelConfig::resnet_plus(50, 3, 0.125);
  cfg.dropout_rate = 0.3;
  ResNetPlus<float> m(cfg, 3);
  StateDict<float> ema = m.state_dict();
  for (auto& [n, t] : ema) t.fill(0.5f);
  CheckpointMeta meta;
  meta.best_val_acc = 0.75;
  meta.epoch = 9;
  meta.class_names = {"a", "b", "c"};
  meta.image_size = 32;
  const auto path = temp_file("roundtrip.ckpt").string();
  save_checkpoint(path, m, &ema, meta);

  auto loaded = load_checkpoint(path);
  EXPECT_EQ(loaded.config, cfg);
  EXPECT_EQ(loaded.meta.epoch, 9);
  EXPECT_EQ(loaded.meta.class_names, meta.class_names);
  EXPECT_EQ(loaded.meta.image_size, 32);
  EXPECT_EQ(loaded.model->state_dict(), m.state_dict());
  EXPECT_EQ(loaded.ema, ema);
}

TEST(Checkpoint, WrongClassCountNamesTheClassifier) {
  ResNetPlus<float> m(ModelConfig::resnet_plus(50, 3, 0.125), 3);
  const auto path = temp_file("classes.ckpt").string();
  save_checkpoint(path, m, nullptr, {});
  try {
    load_checkpoint(path, ModelConfig::resnet_plus(50, 5, 0.125));
    FAIL() << "expected mismatch";
  } catch (const CheckpointMismatch& e) {
    EXPECT_NE(e.tensor().find("fc.weight"), std::string::npos) << e.tensor();
  }
}

TEST(Checkpoint, CorruptFilesAreFormatErrors) {
  ResNetPlus<float> m(ModelConfig::resnet_plus(50, 3, 0.125), 3);
  const auto good = temp_file("good.ckpt");
  save_checkpoint(good.string(), m, nullptr, {});
  const auto size = fs::file_size(good);

  const auto truncated = temp_file("truncated.ckpt");
  fs::copy_file(good, truncated, fs::copy_options::overwrite_existing);
  fs::resize_file(truncated, size - 7);
  EXPECT_THROW(load_checkpoint(truncated.string()), FormatError);

  const auto magic = temp_file("magic.ckpt");
  fs::copy_file(good, magic, fs::copy_options::overwrite_existing);
  {
    std::fstream f(magic, std::ios::in | std::ios::out | std::ios::binary);
    f.write("XXXX", 4);
  }
  EXPECT_THROW(load_checkpoint(magic.string()), FormatError);

  EXPECT_THROW(load_checkpoint(temp_file("missing.ckpt").string()), FormatError);
}
