#pragma once

// Tensor-level numeric kernels. Every reduction runs in a fixed order, so the same
// inputs always produce bit-identical outputs regardless of worker count.

#include <cstddef>
#include <vector>

#include "resnetplus/tensor.hpp"

namespace rnp {

enum class PoolKind { kMax, kAvg };

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, std::size_t stride,
                                   std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// --- convolution -------------------------------------------------------------

/// input [N,Cin,H,W] * kernel [Cout,Cin,kH,kW] with zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, int stride, int padding);

template <typename T>
struct Conv2dGrads {
  Tensor<T> input;
  Tensor<T> kernel;
};

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                               const Tensor<T>& grad_out, int stride, int padding,
                               bool need_input_grad = true, bool need_kernel_grad = true);

// --- pooling ------------------------------------------------------------------

/// Windowed pooling. avg divides by k*k including padded cells; max ignores them.
template <typename T>
Tensor<T> pool2d(const Tensor<T>& input, PoolKind kind, int k, int stride, int padding);

template <typename T>
Tensor<T> pool2d_backward(const Tensor<T>& input, const Tensor<T>& grad_out, PoolKind kind, int k,
                          int stride, int padding);

/// Per-channel pooling over the full H x W extent -> [N,C,1,1].
template <typename T>
Tensor<T> global_pool(const Tensor<T>& input, PoolKind kind);

template <typename T>
Tensor<T> global_pool_backward(const Tensor<T>& input, const Tensor<T>& grad_out, PoolKind kind);

/// Per-pixel pooling across channels -> [N,1,H,W].
template <typename T>
Tensor<T> channel_pool(const Tensor<T>& input, PoolKind kind);

template <typename T>
Tensor<T> channel_pool_backward(const Tensor<T>& input, const Tensor<T>& grad_out, PoolKind kind);

/// Concatenate two [N,*,H,W] maps along the channel axis.
template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b);

// --- dense algebra --------------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> transpose(const Tensor<T>& a);

// --- elementwise ------------------------------------------------------------------

/// True when every extent of `b` equals the matching extent of `a` or is 1.
bool broadcastable_to(const Shape& target, const Shape& b);

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
/// Elementwise product; `b` may broadcast against `a` (e.g. [N,C,1,1] or [N,1,H,W] gates).
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T>
Tensor<T> relu(const Tensor<T>& a);
template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a);

/// Sum `g` (shaped like the broadcast result) down to `target` shape.
template <typename T>
Tensor<T> reduce_to(const Tensor<T>& g, const Shape& target);

template <typename T>
T sum(const Tensor<T>& a);

// --- softmax ------------------------------------------------------------------------

/// Row-wise softmax of [N,K] logits using max subtraction.
template <typename T>
Tensor<T> softmax(const Tensor<T>& logits);

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& logits);

}  // namespace rnp
