#include "resnetplus/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace rnp {

ModelConfig ModelConfig::resnet(int depth, int num_classes, double width) {
  ModelConfig c;
  c.depth = depth;
  c.num_classes = num_classes;
  c.width_mult = width;
  c.cbam = c.sco = c.replace_stem = c.modify_shortcut = c.replace_maxpool = false;
  return c;
}

ModelConfig ModelConfig::resnet_plus(int depth, int num_classes, double width) {
  ModelConfig c;
  c.depth = depth;
  c.num_classes = num_classes;
  c.width_mult = width;
  return c;
}

std::vector<int> ModelConfig::resolved_stage_plan() const {
  if (!stage_plan.empty()) return stage_plan;
  if (depth == 50) return {3, 4, 6, 3};
  if (depth == 101) return {3, 4, 23, 3};
  throw ArgumentError("depth must be 50 or 101, got " + std::to_string(depth));
}

std::size_t ModelConfig::scaled(std::size_t channels) const {
  const double v = std::round(static_cast<double>(channels) * width_mult);
  return std::max<std::size_t>(1, static_cast<std::size_t>(v));
}

void ModelConfig::validate() const {
  const auto plan = resolved_stage_plan();
  if (plan.size() != 4) throw ArgumentError("stage plan must list 4 stages");
  if (!stage_plan.empty()) {
    const std::vector<int> expected = depth == 50    ? std::vector<int>{3, 4, 6, 3}
                                      : depth == 101 ? std::vector<int>{3, 4, 23, 3}
                                                     : std::vector<int>{};
    if (stage_plan != expected) {
      throw ArgumentError("stage plan does not match depth " + std::to_string(depth));
    }
  }
  for (int blocks : plan)
    if (blocks < 1) throw ArgumentError("every stage needs at least one block");
  if (num_classes < 2) throw ArgumentError("num_classes must be >= 2");
  if (!(width_mult > 0.0)) throw ArgumentError("width_mult must be positive");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ArgumentError("dropout_rate must be in [0, 1)");
  }
  if (spatial_kernel < 1 || spatial_kernel % 2 == 0) {
    throw ArgumentError("spatial attention kernel must be odd");
  }
  if (cbam) {
    if (cbam_ratio < 1) throw ArgumentError("cbam_ratio must be >= 1");
    for (std::size_t base : {64u, 128u, 256u, 512u}) {
      const std::size_t c = scaled(base) * Bottleneck<float>::kExpansion;
      if (c < static_cast<std::size_t>(cbam_ratio) || c % static_cast<std::size_t>(cbam_ratio)) {
        throw ArgumentError("channel count " + std::to_string(c) +
                            " incompatible with cbam_ratio " + std::to_string(cbam_ratio));
      }
    }
  }
}

std::string ModelConfig::label() const {
  std::string name = "ResNet" + std::to_string(depth);
  const bool all_on = cbam && sco && replace_stem && modify_shortcut && replace_maxpool;
  const bool all_off = !cbam && !sco && !replace_stem && !modify_shortcut && !replace_maxpool;
  if (all_on) return name + "+";
  if (all_off) return name;
  return name + " (custom)";
}

std::size_t ParamBreakdown::total() const {
  return stem + std::accumulate(stages.begin(), stages.end(), std::size_t{0}) + head;
}

// --- Bottleneck ------------------------------------------------------------------

template <typename T>
Bottleneck<T>::Bottleneck(std::size_t in_channels, std::size_t width, int stride,
                          const ModelConfig& cfg, Rng& rng)
    : shortcut_relu_(cfg.shortcut_relu), stride_(stride) {
  const std::size_t out = width * kExpansion;
  const bool stride_on_3x3 = cfg.sco && !cfg.sco_literal;
  conv1_ = Conv2d<T>(in_channels, width, 1, stride_on_3x3 ? 1 : stride, 0, rng);
  bn1_ = BatchNorm2d<T>(width);
  conv2_ = Conv2d<T>(width, width, 3, stride_on_3x3 ? stride : 1, 1, rng);
  bn2_ = BatchNorm2d<T>(width);
  conv3_ = Conv2d<T>(width, out, 1, 1, 0, rng);
  bn3_ = BatchNorm2d<T>(out);
  if (cfg.cbam) {
    cbam_.emplace(out, static_cast<std::size_t>(cfg.cbam_ratio),
                  static_cast<std::size_t>(cfg.spatial_kernel), rng);
  }
  if (stride == 1 && in_channels == out) {
    shortcut_kind_ = ShortcutKind::kIdentity;
  } else if (cfg.modify_shortcut && stride > 1) {
    shortcut_kind_ = ShortcutKind::kResnetD;
    sc_conv_ = Conv2d<T>(in_channels, out, 1, 1, 0, rng);
    sc_bn_ = BatchNorm2d<T>(out);
  } else {
    shortcut_kind_ = ShortcutKind::kProjection;
    sc_conv_ = Conv2d<T>(in_channels, out, 1, stride, 0, rng);
    sc_bn_ = BatchNorm2d<T>(out);
  }
}

template <typename T>
Var<T> Bottleneck<T>::main_path(const Var<T>& x, Mode mode) {
  auto y = ag::relu(bn1_.forward(conv1_.forward(x), mode));
  y = ag::relu(bn2_.forward(conv2_.forward(y), mode));
  return bn3_.forward(conv3_.forward(y), mode);
}

template <typename T>
Var<T> Bottleneck<T>::shortcut(const Var<T>& x, Mode mode) {
  switch (shortcut_kind_) {
    case ShortcutKind::kIdentity:
      return x;
    case ShortcutKind::kResnetD: {
      auto pooled = ag::pool2d(x, PoolKind::kAvg, 2, 2, 0);
      auto y = sc_bn_.forward(sc_conv_.forward(pooled), mode);
      return shortcut_relu_ ? ag::relu(y) : y;
    }
    case ShortcutKind::kProjection: {
      auto y = sc_bn_.forward(sc_conv_.forward(x), mode);
      return shortcut_relu_ ? ag::relu(y) : y;
    }
  }
  return x;
}

template <typename T>
Var<T> Bottleneck<T>::forward(const Var<T>& x, Mode mode) {
  if (x.value().rank() != 4 || x.shape()[1] != in_channels()) {
    throw DimensionError("bottleneck expects " + std::to_string(in_channels()) +
                         " input channels, got " + shape_str(x.shape()));
  }
  auto residual = main_path(x, mode);
  if (cbam_) residual = cbam_->forward(residual);
  auto skip = shortcut(x, mode);
  if (skip.shape() != residual.shape()) {
    throw DimensionError("bottleneck: shortcut " + shape_str(skip.shape()) +
                         " does not match main path " + shape_str(residual.shape()));
  }
  return ag::relu(ag::add(skip, residual));
}

template <typename T>
void Bottleneck<T>::visit(const std::string& prefix, StateVisitor<T>& v) {
  conv1_.visit(join_name(prefix, "conv1"), v);
  bn1_.visit(join_name(prefix, "bn1"), v);
  conv2_.visit(join_name(prefix, "conv2"), v);
  bn2_.visit(join_name(prefix, "bn2"), v);
  conv3_.visit(join_name(prefix, "conv3"), v);
  bn3_.visit(join_name(prefix, "bn3"), v);
  if (cbam_) cbam_->visit(join_name(prefix, "cbam"), v);
  if (shortcut_kind_ != ShortcutKind::kIdentity) {
    sc_conv_.visit(join_name(prefix, "shortcut.conv"), v);
    sc_bn_.visit(join_name(prefix, "shortcut.bn"), v);
  }
}

// --- Stem ------------------------------------------------------------------------

template <typename T>
Stem<T>::Stem(const ModelConfig& cfg, Rng& rng) : out_channels_(cfg.scaled(64)) {
  if (cfg.replace_stem) {
    const std::size_t mid = cfg.scaled(32);
    convs_.emplace_back(3, mid, 3, 2, 1, rng);
    convs_.emplace_back(mid, mid, 3, 1, 1, rng);
    convs_.emplace_back(mid, out_channels_, 3, 1, 1, rng);
  } else {
    convs_.emplace_back(3, out_channels_, 7, 2, 3, rng);
  }
  for (const auto& c : convs_) bns_.emplace_back(c.out_channels());
  pool_conv_ = cfg.replace_maxpool;
  if (pool_conv_) {
    pool_ = Conv2d<T>(out_channels_, out_channels_, 3, 2, 1, rng);
    pool_bn_ = BatchNorm2d<T>(out_channels_);
  }
}

template <typename T>
Var<T> Stem<T>::forward(const Var<T>& x, Mode mode) {
  const auto& s = x.shape();
  if (s.size() != 4 || s[1] != 3) {
    throw DimensionError("stem expects [N,3,H,W], got " + shape_str(s));
  }
  if (s[2] < 32 || s[3] < 32) {
    throw DimensionError("stem: input spatial extent must be >= 32, got " + shape_str(s));
  }
  auto y = x;
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    y = ag::relu(bns_[i].forward(convs_[i].forward(y), mode));
  }
  if (pool_conv_) return ag::relu(pool_bn_.forward(pool_.forward(y), mode));
  return ag::pool2d(y, PoolKind::kMax, 3, 2, 1);
}

template <typename T>
void Stem<T>::visit(const std::string& prefix, StateVisitor<T>& v) {
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    convs_[i].visit(join_name(prefix, "conv" + std::to_string(i + 1)), v);
    bns_[i].visit(join_name(prefix, "bn" + std::to_string(i + 1)), v);
  }
  if (pool_conv_) {
    pool_.visit(join_name(prefix, "pool_conv"), v);
    pool_bn_.visit(join_name(prefix, "pool_bn"), v);
  }
}

// --- ResNetPlus --------------------------------------------------------------------

template <typename T>
ResNetPlus<T>::ResNetPlus(ModelConfig cfg, std::uint64_t seed)
    : cfg_(std::move(cfg)), dropout_(0.0, seed ^ 0x9e3779b97f4a7c15ULL) {
  cfg_.validate();
  Rng rng(seed);
  stem_ = Stem<T>(cfg_, rng);
  const auto plan = cfg_.resolved_stage_plan();
  std::size_t in = stem_.out_channels();
  for (std::size_t s = 0; s < plan.size(); ++s) {
    const std::size_t width = cfg_.scaled(64u << s);
    std::vector<Bottleneck<T>> blocks;
    for (int b = 0; b < plan[s]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      blocks.emplace_back(in, width, stride, cfg_, rng);
      in = blocks.back().out_channels();
    }
    stages_.push_back(std::move(blocks));
  }
  dropout_ = Dropout<T>(cfg_.dropout_rate, seed ^ 0x9e3779b97f4a7c15ULL);
  fc_ = Linear<T>(in, static_cast<std::size_t>(cfg_.num_classes), rng, LinearInit::kFanInUniform);
}

template <typename T>
Var<T> ResNetPlus<T>::stem_forward(const Var<T>& x, Mode mode) {
  return stem_.forward(x, mode);
}

template <typename T>
Var<T> ResNetPlus<T>::features(const Var<T>& x, Mode mode) {
  auto y = stem_.forward(x, mode);
  for (auto& stage : stages_)
    for (auto& block : stage) y = block.forward(y, mode);
  return y;
}

template <typename T>
Var<T> ResNetPlus<T>::forward(const Var<T>& x, Mode mode) {
  auto f = features(x, mode);
  const std::size_t n = f.shape()[0], c = f.shape()[1];
  auto pooled = ag::reshape(ag::global_pool(f, PoolKind::kAvg), Shape{n, c});
  return fc_.forward(dropout_.forward(pooled, mode));
}

template <typename T>
void ResNetPlus<T>::visit(StateVisitor<T>& v) {
  stem_.visit("stem", v);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    for (std::size_t b = 0; b < stages_[s].size(); ++b) {
      stages_[s][b].visit("layer" + std::to_string(s + 1) + "." + std::to_string(b), v);
    }
  }
  fc_.visit("fc", v);
}

template <typename T>
std::vector<std::pair<std::string, Var<T>>> ResNetPlus<T>::parameters() {
  std::vector<std::pair<std::string, Var<T>>> out;
  StateVisitor<T> v;
  v.parameter = [&](const std::string& name, Var<T>& p) { out.emplace_back(name, p); };
  visit(v);
  return out;
}

template <typename T>
StateDict<T> ResNetPlus<T>::state_dict(bool include_buffers) {
  StateDict<T> out;
  StateVisitor<T> v;
  v.parameter = [&](const std::string& name, Var<T>& p) { out.emplace_back(name, p.value()); };
  if (include_buffers) {
    v.buffer = [&](const std::string& name, Tensor<T>& b) { out.emplace_back(name, b); };
  }
  visit(v);
  return out;
}

template <typename T>
void ResNetPlus<T>::load_state(const StateDict<T>& state, bool require_all) {
  std::map<std::string, const Tensor<T>*> by_name;
  for (const auto& [name, t] : state) by_name[name] = &t;
  std::size_t used = 0;
  auto assign = [&](const std::string& name, Tensor<T>& dst) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      if (require_all) throw CheckpointMismatch(name, "missing tensor '" + name + "'");
      return;
    }
    if (it->second->shape() != dst.shape()) {
      throw CheckpointMismatch(name, "shape mismatch for tensor '" + name + "': stored " +
                                         shape_str(it->second->shape()) + ", model expects " +
                                         shape_str(dst.shape()));
    }
    ++used;
  };
  // Validate everything before mutating so a failed load leaves the model untouched.
  StateVisitor<T> check;
  check.parameter = [&](const std::string& name, Var<T>& p) { assign(name, p.mutable_value()); };
  check.buffer = [&](const std::string& name, Tensor<T>& b) { assign(name, b); };
  visit(check);
  if (used != by_name.size()) {
    StateVisitor<T> names;
    std::map<std::string, bool> known;
    names.parameter = [&](const std::string& n, Var<T>&) { known[n] = true; };
    names.buffer = [&](const std::string& n, Tensor<T>&) { known[n] = true; };
    visit(names);
    for (const auto& [name, t] : state) {
      if (!known.count(name)) throw CheckpointMismatch(name, "unexpected tensor '" + name + "'");
    }
  }
  StateVisitor<T> write;
  write.parameter = [&](const std::string& name, Var<T>& p) {
    if (auto it = by_name.find(name); it != by_name.end()) p.mutable_value() = *it->second;
  };
  write.buffer = [&](const std::string& name, Tensor<T>& b) {
    if (auto it = by_name.find(name); it != by_name.end()) b = *it->second;
  };
  visit(write);
}

template <typename T>
std::size_t ResNetPlus<T>::param_count() {
  return param_breakdown().total();
}

template <typename T>
ParamBreakdown ResNetPlus<T>::param_breakdown() {
  ParamBreakdown out;
  StateVisitor<T> v;
  std::size_t* bucket = &out.stem;
  v.parameter = [&](const std::string& name, Var<T>& p) {
    *bucket += p.value().numel();
    if (name.find(".cbam.") != std::string::npos) out.cbam += p.value().numel();
  };
  stem_.visit("stem", v);
  out.stages.assign(stages_.size(), 0);
  for (std::size_t s = 0; s < stages_.size(); ++s) {
    bucket = &out.stages[s];
    for (std::size_t b = 0; b < stages_[s].size(); ++b) {
      stages_[s][b].visit("layer" + std::to_string(s + 1) + "." + std::to_string(b), v);
    }
  }
  bucket = &out.head;
  fc_.visit("fc", v);
  return out;
}

template <typename From, typename To>
void copy_state(ResNetPlus<From>& src, ResNetPlus<To>& dst) {
  StateDict<To> converted;
  for (auto& [name, t] : src.state_dict(true)) converted.emplace_back(name, t.template cast<To>());
  dst.load_state(converted);
}

template class Bottleneck<float>;
template class Bottleneck<double>;
template class Stem<float>;
template class Stem<double>;
template class ResNetPlus<float>;
template class ResNetPlus<double>;
template void copy_state(ResNetPlus<float>&, ResNetPlus<double>&);
template void copy_state(ResNetPlus<double>&, ResNetPlus<float>&);
template void copy_state(ResNetPlus<float>&, ResNetPlus<float>&);
template void copy_state(ResNetPlus<double>&, ResNetPlus<double>&);

}  // namespace rnp
