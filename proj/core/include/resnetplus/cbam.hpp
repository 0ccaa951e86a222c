#pragma once

#include "resnetplus/layers.hpp"

namespace rnp {

/// Per-channel gates: sigmoid(mlp(avgpool(M)) + mlp(maxpool(M))), where the shared mlp is
/// 1x1 conv (C -> C/ratio), relu, 1x1 conv (C/ratio -> C), both bias-free.
template <typename T>
class ChannelAttention {
 public:
  ChannelAttention() = default;
  ChannelAttention(std::size_t channels, std::size_t ratio, Rng& rng);

  /// [N,C,H,W] -> gates [N,C,1,1] in (0,1).
  Var<T> forward(const Var<T>& m) const;
  void visit(const std::string& prefix, StateVisitor<T>& v);

  Conv2d<T>& reduce() { return reduce_; }
  Conv2d<T>& expand() { return expand_; }
  std::size_t channels() const { return reduce_.in_channels(); }
  std::size_t ratio() const { return ratio_; }

 private:
  Var<T> mlp(const Var<T>& pooled) const;

  Conv2d<T> reduce_, expand_;
  std::size_t ratio_ = 16;
};

/// Per-pixel gates: sigmoid(conv_SxS([mean_c(F), max_c(F)])) with padding S/2, bias-free.
template <typename T>
class SpatialAttention {
 public:
  SpatialAttention() = default;
  SpatialAttention(std::size_t kernel_size, Rng& rng);

  /// [N,C,H,W] -> gates [N,1,H,W] in (0,1).
  Var<T> forward(const Var<T>& f) const;
  void visit(const std::string& prefix, StateVisitor<T>& v);

  Conv2d<T>& conv() { return conv_; }
  std::size_t kernel_size() const { return kernel_size_; }

 private:
  Conv2d<T> conv_;
  std::size_t kernel_size_ = 7;
};

/// Channel gating followed by spatial gating; output has the input's shape.
template <typename T>
class Cbam {
 public:
  Cbam() = default;
  Cbam(std::size_t channels, std::size_t ratio, std::size_t spatial_kernel, Rng& rng);

  Var<T> forward(const Var<T>& m) const;
  void visit(const std::string& prefix, StateVisitor<T>& v);

  ChannelAttention<T>& channel() { return channel_; }
  SpatialAttention<T>& spatial() { return spatial_; }
  const ChannelAttention<T>& channel() const { return channel_; }
  const SpatialAttention<T>& spatial() const { return spatial_; }

 private:
  ChannelAttention<T> channel_;
  SpatialAttention<T> spatial_;
};

}  // namespace rnp
