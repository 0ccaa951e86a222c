#pragma once

// Differentiable counterparts of the tensor kernels.

#include "resnetplus/autograd.hpp"
#include "resnetplus/kernels.hpp"

namespace rnp::ag {

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, int stride, int padding);
template <typename T>
Var<T> pool2d(const Var<T>& x, PoolKind kind, int k, int stride, int padding);
template <typename T>
Var<T> global_pool(const Var<T>& x, PoolKind kind);
template <typename T>
Var<T> channel_pool(const Var<T>& x, PoolKind kind);
template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> transpose(const Var<T>& a);
template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape);

/// `b` may broadcast against `a` in add/mul (trailing or leading extents of 1).
template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T s);
template <typename T>
Var<T> relu(const Var<T>& a);
template <typename T>
Var<T> sigmoid(const Var<T>& a);

/// Scalar [1] results.
template <typename T>
Var<T> sum(const Var<T>& a);
template <typename T>
Var<T> mean(const Var<T>& a);

template <typename T>
Var<T> softmax(const Var<T>& logits);

template <typename T>
Var<T> operator+(const Var<T>& a, const Var<T>& b) {
  return add(a, b);
}
template <typename T>
Var<T> operator-(const Var<T>& a, const Var<T>& b) {
  return sub(a, b);
}
template <typename T>
Var<T> operator*(const Var<T>& a, const Var<T>& b) {
  return mul(a, b);
}

}  // namespace rnp::ag
