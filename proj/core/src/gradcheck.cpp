#include "resnetplus/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "resnetplus/cbam.hpp"
#include "resnetplus/trainer.hpp"

namespace rnp {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-12);
}

namespace {

double eval_scalar(const Var<double>& y) {
  if (y.value().numel() != 1) {
    throw ArgumentError("grad_check: function must return a scalar, got " + shape_str(y.shape()));
  }
  return y.value()[0];
}

}  // namespace

GradCheckResult grad_check(const ScalarFn& fn, const Tensor<double>& x, double eps,
                           const std::vector<std::size_t>& indices) {
  Var<double> xv(x, true);
  {
    Tape<double> tape;
    Tape<double>::Scope scope(tape);
    auto y = fn(xv);
    eval_scalar(y);
    tape.backward(y);
  }
  const Tensor<double> analytic =
      xv.has_grad() ? xv.grad() : Tensor<double>(x.shape(), 0.0);

  std::vector<std::size_t> idx = indices;
  if (idx.empty()) {
    idx.resize(x.numel());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
  }
  GradCheckResult r;
  Tensor<double> probe = x;
  for (std::size_t i : idx) {
    const double orig = probe[i];
    probe[i] = orig + eps;
    const double fp = eval_scalar(fn(Var<double>(probe)));
    probe[i] = orig - eps;
    const double fm = eval_scalar(fn(Var<double>(probe)));
    probe[i] = orig;
    const double numeric = (fp - fm) / (2 * eps);
    const double err = relative_error(analytic[i], numeric);
    if (r.checked == 0 || err > r.max_rel_error) {
      r.max_rel_error = err;
      r.worst_index = i;
      r.analytic = analytic[i];
      r.numeric = numeric;
    }
    ++r.checked;
  }
  return r;
}

namespace {
constexpr double kConsistent = 1e-5;
}  // namespace

ParamCheckResult grad_check_parameters(std::vector<std::pair<std::string, Var<double>>> params,
                                       const std::function<Var<double>()>& loss, double eps,
                                       std::size_t per_tensor, std::uint64_t seed,
                                       int refine) {
  for (auto& [name, p] : params) p.zero_grad();
  {
    Tape<double> tape;
    Tape<double>::Scope scope(tape);
    auto y = loss();
    eval_scalar(y);
    tape.backward(y);
  }
  std::vector<Tensor<double>> analytic;
  analytic.reserve(params.size());
  for (auto& [name, p] : params) {
    analytic.push_back(p.has_grad() ? p.grad() : Tensor<double>(p.shape(), 0.0));
  }

  Rng rng(seed);
  ParamCheckResult r;
  for (std::size_t t = 0; t < params.size(); ++t) {
    auto& [name, p] = params[t];
    Tensor<double>& w = p.mutable_value();
    std::vector<std::size_t> pick(w.numel());
    std::iota(pick.begin(), pick.end(), std::size_t{0});
    std::shuffle(pick.begin(), pick.end(), rng);
    pick.resize(std::min(per_tensor, pick.size()));
    for (std::size_t i : pick) {
      const double orig = w[i];
      auto central = [&](double h) {
        w[i] = orig + h;
        const double fp = eval_scalar(loss());
        w[i] = orig - h;
        const double fm = eval_scalar(loss());
        w[i] = orig;
        return (fp - fm) / (2 * h);
      };
      // Large steps drown in curvature or kinks, small ones in rounding; successive
      // estimates agree only where neither dominates.
      double h = eps;
      double prev = central(h);
      double numeric = prev;
      double best_gap = std::numeric_limits<double>::infinity();
      for (int level = 0; level < refine; ++level) {
        h /= 10;
        const double next = central(h);
        const double gap = std::abs(next - prev) / (std::abs(next) + std::abs(prev) + 1e-300);
        if (gap < best_gap) {
          best_gap = gap;
          numeric = prev;
        }
        if (gap < kConsistent) break;
        prev = next;
      }
      const double err = relative_error(analytic[t][i], numeric);
      if (r.checked == 0 || err > r.max_rel_error) {
        r.max_rel_error = err;
        r.worst_param = name;
        r.worst_index = i;
        r.analytic = analytic[t][i];
        r.numeric = numeric;
      }
      ++r.checked;
    }
    ++r.tensors;
  }
  for (auto& [name, p] : params) p.zero_grad();
  return r;
}

GradCheckScope parse_gradcheck_scope(const std::string& s) {
  if (s == "primitives") return GradCheckScope::kPrimitives;
  if (s == "blocks") return GradCheckScope::kBlocks;
  if (s == "full") return GradCheckScope::kFull;
  throw ArgumentError("unknown gradcheck scope '" + s + "' (primitives, blocks, full)");
}

namespace {

using T = double;
using V = Var<double>;

Tensor<T> normal(const Shape& shape, Rng& rng, double stddev = 1.0) {
  std::normal_distribution<double> nd(0.0, stddev);
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = nd(rng);
  return t;
}

/// Distinct values on a 0.05 lattice, offset so none is within 0.025 of zero. Keeps max
/// selections and rectifier signs stable under small perturbations.
Tensor<T> lattice(const Shape& shape, Rng& rng) {
  Tensor<T> t(shape);
  const std::size_t n = t.numel();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = (static_cast<double>(order[i]) - static_cast<double>(n) / 2.0) * 0.05 + 0.025;
  }
  return t;
}

/// Scalarizes an op output with fixed random weights so every element matters.
V weighted_sum(const V& y, std::uint64_t seed) {
  // Magnitudes in [0.5, 1.5] with random signs: no output is weighted near zero, which
  // would leave gradients dominated by rounding noise.
  Rng rng(seed);
  std::uniform_real_distribution<double> mag(0.5, 1.5);
  Tensor<T> w(y.shape());
  for (auto& v : w.data()) v = (rng() & 1 ? 1.0 : -1.0) * mag(rng);
  return ag::sum(ag::mul(y, V(w)));
}

/// Sigmoid whose recorded adjoint is off by 1%: negative control for the suite.
V corrupted_sigmoid(const V& a) {
  Tensor<T> y = sigmoid(a.value());
  return make_op<T>("corrupted_sigmoid", y, {&a}, [&] {
    return [in = a.node(), y](const Tensor<T>& g) {
      Tensor<T> dx(g.shape());
      for (std::size_t i = 0; i < g.numel(); ++i) dx[i] = 1.01 * g[i] * y[i] * (1 - y[i]);
      in->accumulate(std::move(dx));
    };
  });
}

// Step sizes. Smooth fixtures tolerate a large step, which keeps rounding noise small;
// fixtures with many rectifiers need a small one so perturbations rarely cross a kink.
constexpr double kSmoothEps = 1e-4;
constexpr double kRectifiedEps = 1e-5;
constexpr double kModelEps = 1e-4;
constexpr int kModelRefine = 3;  // down to 1e-7

struct Suite {
  GradCheckSuiteOptions opts;
  double tol;
  std::vector<GradCheckEntry> entries;

  double step(double fallback) const { return opts.eps > 0 ? opts.eps : fallback; }

  void check(const std::string& name, const ScalarFn& fn, const Tensor<T>& x, double eps) {
    auto r = grad_check(fn, x, step(eps));
    entries.push_back({name, r.max_rel_error, tol, r.checked, "[" + std::to_string(r.worst_index) + "]"});
  }
  void check_params(const std::string& name, std::vector<std::pair<std::string, V>> params,
                    const std::function<V()>& loss, std::size_t per_tensor, double eps,
                    int refine = 0) {
    auto r = grad_check_parameters(std::move(params), loss, step(eps), per_tensor, opts.seed + 99,
                                   refine);
    entries.push_back({name, r.max_rel_error, tol, r.checked,
                       r.worst_param + "[" + std::to_string(r.worst_index) + "]"});
  }
};

void primitives(Suite& s) {
  Rng rng(s.opts.seed);
  const auto x4 = normal({2, 3, 5, 5}, rng);
  const auto k4 = normal({4, 3, 3, 3}, rng, 0.5);

  s.check("conv2d/input", [&](const V& x) {
    return weighted_sum(ag::conv2d(x, V(k4), 2, 1), 1);
  }, x4, kSmoothEps);
  s.check("conv2d/kernel", [&](const V& k) {
    return weighted_sum(ag::conv2d(V(x4), k, 1, 1), 2);
  }, k4, kSmoothEps);
  const auto lat = lattice({2, 3, 6, 6}, rng);
  s.check("pool2d/max", [&](const V& x) {
    return weighted_sum(ag::pool2d(x, PoolKind::kMax, 3, 2, 1), 3);
  }, lat, kSmoothEps);
  s.check("pool2d/avg", [&](const V& x) {
    return weighted_sum(ag::pool2d(x, PoolKind::kAvg, 3, 2, 1), 4);
  }, x4, kSmoothEps);
  s.check("global_pool/max", [&](const V& x) {
    return weighted_sum(ag::global_pool(x, PoolKind::kMax), 5);
  }, lat, kSmoothEps);
  s.check("global_pool/avg", [&](const V& x) {
    return weighted_sum(ag::global_pool(x, PoolKind::kAvg), 6);
  }, x4, kSmoothEps);
  s.check("channel_pool/max", [&](const V& x) {
    return weighted_sum(ag::channel_pool(x, PoolKind::kMax), 7);
  }, lat, kSmoothEps);
  s.check("channel_pool/avg", [&](const V& x) {
    return weighted_sum(ag::channel_pool(x, PoolKind::kAvg), 8);
  }, x4, kSmoothEps);
  const auto other = normal({2, 2, 5, 5}, rng);
  s.check("concat_channels", [&](const V& x) {
    return weighted_sum(ag::concat_channels(x, V(other)), 9);
  }, x4, kSmoothEps);

  const auto a = normal({4, 7}, rng);
  const auto b = normal({7, 3}, rng);
  s.check("matmul/a", [&](const V& x) { return weighted_sum(ag::matmul(x, V(b)), 10); }, a, kSmoothEps);
  s.check("matmul/b", [&](const V& x) { return weighted_sum(ag::matmul(V(a), x), 11); }, b, kSmoothEps);
  s.check("transpose", [&](const V& x) { return weighted_sum(ag::transpose(x), 12); }, a, kSmoothEps);
  s.check("reshape", [&](const V& x) { return weighted_sum(ag::reshape(x, {7, 4}), 13); }, a, kSmoothEps);

  const auto gate = normal({2, 3, 1, 1}, rng);
  s.check("add/broadcast", [&](const V& x) {
    return weighted_sum(ag::add(V(x4), x), 14);
  }, gate, kSmoothEps);
  s.check("sub", [&](const V& x) { return weighted_sum(ag::sub(x, V(x4)), 15); }, x4, kSmoothEps);
  s.check("mul/lhs", [&](const V& x) { return weighted_sum(ag::mul(x, V(gate)), 16); }, x4, kSmoothEps);
  s.check("mul/broadcast", [&](const V& x) {
    return weighted_sum(ag::mul(V(x4), x), 17);
  }, gate, kSmoothEps);
  s.check("scale", [&](const V& x) { return weighted_sum(ag::scale(x, 2.5), 18); }, x4, kSmoothEps);
  s.check("relu", [&](const V& x) { return weighted_sum(ag::relu(x), 19); }, lat, kSmoothEps);
  s.check("sigmoid", [&](const V& x) { return weighted_sum(ag::sigmoid(x), 20); }, x4, kSmoothEps);
  s.check("sum", [&](const V& x) { return ag::scale(ag::sum(x), 0.5); }, x4, kSmoothEps);
  s.check("mean", [&](const V& x) { return ag::mean(ag::mul(x, x)); }, x4, kSmoothEps);
  s.check("softmax", [&](const V& x) { return weighted_sum(ag::softmax(x), 21); }, a, kSmoothEps);
  const std::vector<int> labels{0, 2, 1, 2};
  s.check("cross_entropy", [&](const V& x) {
    return cross_entropy(ag::reshape(x, {4, 7}), labels);
  }, a, kSmoothEps);

  const auto gamma = normal({3}, rng);
  const auto beta = normal({3}, rng);
  s.check("batch_norm_train/input", [&](const V& x) {
    return weighted_sum(batch_norm_train(x, V(gamma), V(beta), 1e-5), 22);
  }, x4, kSmoothEps);
  s.check("batch_norm_train/gamma", [&](const V& g) {
    return weighted_sum(batch_norm_train(V(x4), g, V(beta), 1e-5), 23);
  }, gamma, kSmoothEps);
  Tensor<T> rm = normal({3}, rng, 0.1);
  Tensor<T> rv({3}, 1.3);
  s.check("batch_norm_eval/input", [&](const V& x) {
    return weighted_sum(batch_norm_eval(x, V(gamma), V(beta), rm, rv, 1e-5), 24);
  }, x4, kSmoothEps);

  Rng lr(s.opts.seed + 1);
  Linear<T> lin(7, 3, lr);
  s.check("linear/input", [&](const V& x) { return weighted_sum(lin.forward(x), 25); }, a, kSmoothEps);
  s.check("dropout/train", [&](const V& x) {
    Dropout<T> d(0.5, 1234);
    return weighted_sum(d.forward(x, Mode::kTrain), 26);
  }, x4, kSmoothEps);

  if (s.opts.corrupt_adjoint) {
    s.check("corrupted_sigmoid", [&](const V& x) {
      return weighted_sum(corrupted_sigmoid(x), 27);
    }, x4, kSmoothEps);
  }
}

void blocks(Suite& s) {
  Rng rng(s.opts.seed + 2);
  {
    Rng init(11);
    Conv2d<T> conv(3, 4, 3, 1, 1, init);
    BatchNorm2d<T> bn(4);
    const auto x = normal({2, 3, 4, 4}, rng);
    auto fn = [&](const V& in) {
      return weighted_sum(ag::relu(bn.forward(conv.forward(in), Mode::kTrain)), 30);
    };
    s.check("conv_bn_relu/input", fn, x, kRectifiedEps);
    s.check("conv_bn_relu/kernel", [&](const V& k) {
      return weighted_sum(ag::relu(batch_norm_train(ag::conv2d(V(x), k, 1, 1), bn.gamma(),
                                                    bn.beta(), 1e-5)), 30);
    }, conv.weight().value(), kRectifiedEps);
  }
  {
    Rng init(12);
    Cbam<T> cbam(16, 4, 3, init);
    const auto x = normal({2, 16, 4, 4}, rng);
    s.check("cbam/input", [&](const V& in) { return weighted_sum(cbam.forward(in), 31); }, x,
            kSmoothEps);
    std::vector<std::pair<std::string, V>> params;
    StateVisitor<T> v;
    v.parameter = [&](const std::string& n, V& p) { params.emplace_back(n, p); };
    cbam.visit("cbam", v);
    s.check_params("cbam/params", params, [&] { return weighted_sum(cbam.forward(V(x)), 31); }, 8,
                   kSmoothEps);
  }
  for (bool ms : {false, true}) {
    ModelConfig cfg = ModelConfig::resnet_plus(50, 3, 0.25);
    cfg.modify_shortcut = ms;
    cfg.cbam_ratio = 4;
    cfg.spatial_kernel = 3;
    Rng init(13);
    // 16 -> 32 channels at stride 2: a downsampling block with a projection shortcut.
    Bottleneck<T> block(16, 8, 2, cfg, init);
    const auto x = normal({2, 16, 4, 4}, rng);
    const std::string name = ms ? "bottleneck/resnet_d" : "bottleneck/projection";
    s.check(name + "/input", [&](const V& in) {
      return weighted_sum(block.forward(in, Mode::kTrain), 32);
    }, x, kRectifiedEps);
    std::vector<std::pair<std::string, V>> params;
    StateVisitor<T> v;
    v.parameter = [&](const std::string& n, V& p) { params.emplace_back(n, p); };
    block.visit("block", v);
    s.check_params(name + "/params", params,
                   [&] { return weighted_sum(block.forward(V(x), Mode::kTrain), 32); }, 4,
                   kRectifiedEps);
  }
  {
    // Three-block composite: one downsampling block followed by two identity blocks.
    ModelConfig cfg = ModelConfig::resnet_plus(50, 3, 0.25);
    cfg.cbam_ratio = 4;
    cfg.spatial_kernel = 3;
    Rng init(14);
    std::vector<Bottleneck<T>> stage;
    stage.emplace_back(16, 4, 2, cfg, init);
    stage.emplace_back(16, 4, 1, cfg, init);
    stage.emplace_back(16, 4, 1, cfg, init);
    const auto x = normal({2, 16, 4, 4}, rng);
    auto run = [&](const V& in) {
      V h = in;
      for (auto& b : stage) h = b.forward(h, Mode::kTrain);
      return weighted_sum(h, 33);
    };
    s.check("three_blocks/input", run, x, kRectifiedEps);
    std::vector<std::pair<std::string, V>> params;
    StateVisitor<T> v;
    v.parameter = [&](const std::string& n, V& p) { params.emplace_back(n, p); };
    for (std::size_t i = 0; i < stage.size(); ++i) stage[i].visit(std::to_string(i), v);
    s.check_params("three_blocks/params", params, [&] { return run(V(x)); }, 3, kRectifiedEps);
  }
}

void full(Suite& s) {
  // Train mode on four samples: with two, the last stage normalizes over two values per
  // channel and behaves almost like a sign function. Eval mode covers the two-sample case.
  // Each pass gets a fresh model so train-mode running statistics cannot leak into eval.
  const ModelConfig cfg = ModelConfig::resnet_plus(50, 3, 0.25);
  Rng rng(s.opts.seed + 3);
  for (auto [mode, n] : {std::pair{Mode::kTrain, std::size_t{4}}, std::pair{Mode::kEval, std::size_t{2}}}) {
    ResNetPlus<T> model(cfg, s.opts.seed);
    const V x(normal({n, 3, 32, 32}, rng));
    std::vector<int> labels;
    for (std::size_t i = 0; i < n; ++i) labels.push_back(static_cast<int>((i * 2) % 3));
    auto loss = [&, mode = mode] {
      model.reseed_dropout(s.opts.seed + 4);
      return cross_entropy(model.forward(x, mode), labels);
    };
    const std::string name = mode == Mode::kTrain ? "resnet50plus/train" : "resnet50plus/eval";
    s.check_params(name, model.parameters(), loss, s.opts.per_tensor, kModelEps, kModelRefine);
  }
}

}  // namespace

std::vector<GradCheckEntry> run_gradcheck_suite(GradCheckScope scope,
                                                const GradCheckSuiteOptions& opts) {
  Suite s{opts, scope == GradCheckScope::kFull ? 1e-4 : 1e-6, {}};
  switch (scope) {
    case GradCheckScope::kPrimitives: primitives(s); break;
    case GradCheckScope::kBlocks: blocks(s); break;
    case GradCheckScope::kFull: full(s); break;
  }
  if (opts.corrupt_adjoint && scope != GradCheckScope::kPrimitives) {
    Rng rng(opts.seed);
    const auto x = normal({2, 3, 4, 4}, rng);
    auto r = grad_check([](const V& in) { return weighted_sum(corrupted_sigmoid(in), 27); }, x,
                        s.step(kSmoothEps));
    s.entries.push_back({"corrupted_sigmoid", r.max_rel_error, s.tol, r.checked,
                         "[" + std::to_string(r.worst_index) + "]"});
  }
  return s.entries;
}

}  // namespace rnp
