#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "resnetplus/cbam.hpp"
#include "resnetplus/layers.hpp"

namespace rnp {

/// Declarative description of a ResNet / ResNet+ variant.
struct ModelConfig {
  int depth = 50;
  std::vector<int> stage_plan;  // empty = derived from depth
  int num_classes = 3;
  double width_mult = 1.0;

  // Ablation toggles. All on = ResNet+; all off = the plain ResNet baseline.
  bool cbam = true;
  bool sco = true;              // stride-2 of a downsampling block on the 3x3 conv
  bool replace_stem = true;     // three 3x3 convs instead of the 7x7
  bool modify_shortcut = true;  // avgpool(2,2) -> 1x1 conv stride 1 -> bn projection
  bool replace_maxpool = true;  // stride-2 3x3 conv+bn+relu instead of the 3x3 max pool

  // Literal-reading escape hatches.
  bool sco_literal = false;    // keep stride 2 on the leading 1x1 even when sco is on
  bool shortcut_relu = false;  // rectifier at the end of the projection shortcut

  int cbam_ratio = 16;
  int spatial_kernel = 7;
  double dropout_rate = 0.5;

  static ModelConfig resnet(int depth, int num_classes = 3, double width = 1.0);
  static ModelConfig resnet_plus(int depth, int num_classes = 3, double width = 1.0);

  std::vector<int> resolved_stage_plan() const;
  /// Channel count after the width multiplier (never below 1).
  std::size_t scaled(std::size_t channels) const;
  /// Throws ArgumentError when the configuration violates an invariant.
  void validate() const;
  /// "ResNet50+" / "ResNet101" / "ResNet50 (custom)".
  std::string label() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

template <typename T>
using StateDict = std::vector<std::pair<std::string, Tensor<T>>>;

enum class ShortcutKind { kIdentity, kProjection, kResnetD };

template <typename T>
class Bottleneck {
 public:
  static constexpr std::size_t kExpansion = 4;

  Bottleneck(std::size_t in_channels, std::size_t width, int stride, const ModelConfig& cfg,
             Rng& rng);

  /// relu(shortcut(x) + cbam(bn3(conv3(...)))).
  Var<T> forward(const Var<T>& x, Mode mode);
  /// conv1 -> bn -> relu -> conv2 -> bn -> relu -> conv3 -> bn, before any gating.
  Var<T> main_path(const Var<T>& x, Mode mode);
  Var<T> shortcut(const Var<T>& x, Mode mode);

  void visit(const std::string& prefix, StateVisitor<T>& v);

  ShortcutKind shortcut_kind() const { return shortcut_kind_; }
  bool has_cbam() const { return cbam_.has_value(); }
  Cbam<T>& cbam() { return *cbam_; }
  BatchNorm2d<T>& bn3() { return bn3_; }
  Conv2d<T>& conv1() { return conv1_; }
  Conv2d<T>& conv2() { return conv2_; }
  Conv2d<T>& shortcut_conv() { return sc_conv_; }
  BatchNorm2d<T>& shortcut_bn() { return sc_bn_; }
  std::size_t in_channels() const { return conv1_.in_channels(); }
  std::size_t out_channels() const { return conv3_.out_channels(); }
  int stride() const { return stride_; }

 private:
  Conv2d<T> conv1_, conv2_, conv3_;
  BatchNorm2d<T> bn1_, bn2_, bn3_;
  std::optional<Cbam<T>> cbam_;
  ShortcutKind shortcut_kind_ = ShortcutKind::kIdentity;
  Conv2d<T> sc_conv_;
  BatchNorm2d<T> sc_bn_;
  bool shortcut_relu_ = false;
  int stride_ = 1;
};

/// Conv(s)+bn+relu followed by the max pool or its stride-2 conv replacement.
/// Downsamples by exactly 4 in each spatial dimension.
template <typename T>
class Stem {
 public:
  Stem() = default;
  Stem(const ModelConfig& cfg, Rng& rng);

  Var<T> forward(const Var<T>& x, Mode mode);
  void visit(const std::string& prefix, StateVisitor<T>& v);
  std::size_t out_channels() const { return out_channels_; }
  std::size_t conv_count() const { return convs_.size(); }

 private:
  std::vector<Conv2d<T>> convs_;
  std::vector<BatchNorm2d<T>> bns_;
  bool pool_conv_ = false;
  Conv2d<T> pool_;
  BatchNorm2d<T> pool_bn_;
  std::size_t out_channels_ = 0;
};

struct ParamBreakdown {
  std::size_t stem = 0;
  std::vector<std::size_t> stages;
  std::size_t head = 0;
  std::size_t cbam = 0;  // already included in `stages`
  std::size_t total() const;
};

/// ResNet50/101 and their "+" variants.
template <typename T>
class ResNetPlus {
 public:
  ResNetPlus(ModelConfig cfg, std::uint64_t seed);
  ResNetPlus(const ResNetPlus&) = delete;
  ResNetPlus& operator=(const ResNetPlus&) = delete;
  ResNetPlus(ResNetPlus&&) noexcept = default;
  ResNetPlus& operator=(ResNetPlus&&) noexcept = default;

  /// [N,3,H,W] -> logits [N,num_classes]. Dropout is active in train mode only.
  Var<T> forward(const Var<T>& x, Mode mode);
  Var<T> stem_forward(const Var<T>& x, Mode mode);
  /// Stem plus all stages: the final feature map before pooling.
  Var<T> features(const Var<T>& x, Mode mode);

  void visit(StateVisitor<T>& v);
  std::vector<std::pair<std::string, Var<T>>> parameters();
  StateDict<T> state_dict(bool include_buffers = true);
  /// Copies tensors by name; throws CheckpointMismatch on unknown names or shapes.
  void load_state(const StateDict<T>& state, bool require_all = true);

  std::size_t param_count();
  ParamBreakdown param_breakdown();

  void reseed_dropout(std::uint64_t seed) { dropout_.reseed(seed); }
  const ModelConfig& config() const { return cfg_; }
  Stem<T>& stem() { return stem_; }
  std::vector<std::vector<Bottleneck<T>>>& stages() { return stages_; }
  Linear<T>& fc() { return fc_; }

 private:
  ModelConfig cfg_;
  Stem<T> stem_;
  std::vector<std::vector<Bottleneck<T>>> stages_;
  Dropout<T> dropout_;
  Linear<T> fc_;
};

/// Copies every parameter and buffer of `src` into `dst` (same config), converting precision.
template <typename From, typename To>
void copy_state(ResNetPlus<From>& src, ResNetPlus<To>& dst);

}  // namespace rnp
