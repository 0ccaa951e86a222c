#include "resnetplus/cbam.hpp"

namespace rnp {

template <typename T>
ChannelAttention<T>::ChannelAttention(std::size_t channels, std::size_t ratio, Rng& rng)
    : ratio_(ratio) {
  if (ratio == 0 || channels % ratio != 0) {
    throw ArgumentError("channel attention: " + std::to_string(channels) +
                        " channels not divisible by ratio " + std::to_string(ratio));
  }
  reduce_ = Conv2d<T>(channels, channels / ratio, 1, 1, 0, rng);
  expand_ = Conv2d<T>(channels / ratio, channels, 1, 1, 0, rng);
}

template <typename T>
Var<T> ChannelAttention<T>::mlp(const Var<T>& pooled) const {
  return expand_.forward(ag::relu(reduce_.forward(pooled)));
}

template <typename T>
Var<T> ChannelAttention<T>::forward(const Var<T>& m) const {
  if (m.value().rank() != 4 || m.shape()[1] != channels()) {
    throw DimensionError("channel attention expects " + std::to_string(channels()) +
                         " channels, got input " + shape_str(m.shape()));
  }
  auto avg = mlp(ag::global_pool(m, PoolKind::kAvg));
  auto max = mlp(ag::global_pool(m, PoolKind::kMax));
  return ag::sigmoid(ag::add(avg, max));
}

template <typename T>
void ChannelAttention<T>::visit(const std::string& prefix, StateVisitor<T>& v) {
  reduce_.visit(join_name(prefix, "reduce"), v);
  expand_.visit(join_name(prefix, "expand"), v);
}

template <typename T>
SpatialAttention<T>::SpatialAttention(std::size_t kernel_size, Rng& rng)
    : kernel_size_(kernel_size) {
  if (kernel_size % 2 == 0) {
    throw ArgumentError("spatial attention kernel must be odd, got " +
                        std::to_string(kernel_size));
  }
  conv_ = Conv2d<T>(2, 1, kernel_size, 1, static_cast<int>(kernel_size / 2), rng);
}

template <typename T>
Var<T> SpatialAttention<T>::forward(const Var<T>& f) const {
  auto stacked = ag::concat_channels(ag::channel_pool(f, PoolKind::kAvg),
                                     ag::channel_pool(f, PoolKind::kMax));
  return ag::sigmoid(conv_.forward(stacked));
}

template <typename T>
void SpatialAttention<T>::visit(const std::string& prefix, StateVisitor<T>& v) {
  conv_.visit(join_name(prefix, "conv"), v);
}

template <typename T>
Cbam<T>::Cbam(std::size_t channels, std::size_t ratio, std::size_t spatial_kernel, Rng& rng)
    : channel_(channels, ratio, rng), spatial_(spatial_kernel, rng) {}

template <typename T>
Var<T> Cbam<T>::forward(const Var<T>& m) const {
  auto fc = ag::mul(m, channel_.forward(m));
  return ag::mul(fc, spatial_.forward(fc));
}

template <typename T>
void Cbam<T>::visit(const std::string& prefix, StateVisitor<T>& v) {
  channel_.visit(join_name(prefix, "channel"), v);
  spatial_.visit(join_name(prefix, "spatial"), v);
}

template class ChannelAttention<float>;
template class ChannelAttention<double>;
template class SpatialAttention<float>;
template class SpatialAttention<double>;
template class Cbam<float>;
template class Cbam<double>;

}  // namespace rnp
