#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "oracles.hpp"
#include "resnetplus/cbam.hpp"
#include "resnetplus/model.hpp"

using namespace rnp;
using V = Var<double>;

namespace {

void zero_parameters(Cbam<double>& cbam) {
  StateVisitor<double> v;
  v.parameter = [](const std::string&, V& p) { p.mutable_value().fill(0.0); };
  v.buffer = [](const std::string&, Tensor<double>&) {};
  cbam.visit("", v);
}

}  // namespace

TEST(Cbam, ChannelAndSpatialGatesMatchOraclesOverRandomInstances) {
  std::mt19937_64 pick(2024);
  double worst_c = 0, worst_s = 0, worst_out = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t ratio = std::size_t{1} << (pick() % 3);       // 1, 2, 4
    const std::size_t c = ratio * (1 + pick() % 4);                 // multiple of ratio
    const std::size_t n = 1 + pick() % 3, h = 1 + pick() % 9, w = 1 + pick() % 9;
    const std::size_t ks = 2 * (pick() % 4) + 1;                    // 1, 3, 5, 7
    Rng rng(inst);
    Cbam<double> cbam(c, ratio, ks, rng);
    const auto m = oracle::random({n, c, h, w}, 1000 + inst, -2, 2);

    const auto gate_c = cbam.channel().forward(V(m)).value();
    const auto want_c = oracle::channel_gate(m, cbam.channel().reduce().weight().value(),
                                            cbam.channel().expand().weight().value());
    worst_c = std::max(worst_c, oracle::max_abs_diff(gate_c, want_c));

    const auto fc = mul(m, want_c);
    const auto gate_s = cbam.spatial().forward(V(fc)).value();
    const auto want_s = oracle::spatial_gate(fc, cbam.spatial().conv().weight().value());
    worst_s = std::max(worst_s, oracle::max_abs_diff(gate_s, want_s));

    const auto out = cbam.forward(V(m)).value();
    worst_out = std::max(worst_out, oracle::max_abs_diff(out, mul(fc, want_s)));
    for (double g : gate_c.data()) ASSERT_TRUE(g > 0 && g < 1);
    ASSERT_EQ(out.shape(), m.shape());
  }
  EXPECT_LT(worst_c, 1e-6);
  EXPECT_LT(worst_s, 1e-6);
  EXPECT_LT(worst_out, 1e-6);
}

TEST(Cbam, ZeroParametersGiveExactlyAQuarter) {
  Rng rng(1);
  Cbam<double> cbam(32, 16, 7, rng);
  zero_parameters(cbam);
  const auto m = oracle::random({2, 32, 6, 5}, 2, -3, 3);
  const auto out = cbam.forward(V(m)).value();
  for (std::size_t i = 0; i < m.numel(); ++i) ASSERT_EQ(out[i], 0.25 * m[i]);
}

TEST(Cbam, RejectsBadConfiguration) {
  Rng rng(3);
  EXPECT_THROW(Cbam<double>(30, 16, 7, rng), ArgumentError);
  EXPECT_THROW(Cbam<double>(32, 16, 6, rng), ArgumentError);
  Cbam<double> ok(32, 16, 7, rng);
  EXPECT_THROW(ok.forward(V(oracle::random({1, 16, 4, 4}, 4))), DimensionError);
}

TEST(Cbam, BottleneckWithNeutralGatesAddsQuarterOfMainPath) {
  ModelConfig cfg = ModelConfig::resnet_plus(50, 3, 0.5);
  cfg.cbam_ratio = 4;
  Rng rng(5);
  Bottleneck<double> block(32, 16, 2, cfg, rng);
  ASSERT_TRUE(block.has_cbam());
  zero_parameters(block.cbam());
  const auto x = oracle::random({2, 32, 8, 8}, 6);
  const auto main = block.main_path(V(x), Mode::kEval).value();
  const auto sc = block.shortcut(V(x), Mode::kEval).value();
  const auto y = block.forward(V(x), Mode::kEval).value();
  ASSERT_EQ(y.shape(), (Shape{2, 64, 4, 4}));
  for (std::size_t i = 0; i < y.numel(); ++i) {
    EXPECT_NEAR(y[i], std::max(0.0, sc[i] + 0.25 * main[i]), 1e-12);
  }
}

TEST(Cbam, GradientsReachEveryParameter) {
  Rng rng(7);
  Cbam<double> cbam(8, 2, 3, rng);
  V m(oracle::random({2, 8, 4, 4}, 8), true);
  Tape<double> tape;
  {
    Tape<double>::Scope s(tape);
    tape.backward(ag::sum(cbam.forward(m)));
  }
  StateVisitor<double> v;
  v.parameter = [](const std::string& name, V& p) {
    ASSERT_TRUE(p.has_grad()) << name;
    double norm = 0;
    for (double g : p.grad().data()) norm += g * g;
    EXPECT_GT(norm, 0.0) << name;
  };
  v.buffer = [](const std::string&, Tensor<double>&) {};
  cbam.visit("cbam", v);
  EXPECT_TRUE(m.has_grad());
}
