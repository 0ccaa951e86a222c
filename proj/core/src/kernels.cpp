#include "resnetplus/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "resnetplus/parallel.hpp"

namespace rnp {
namespace {

void require_rank(const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw DimensionError(std::string(what) + ": expected rank " + std::to_string(rank) +
                         " tensor, got " + shape_str(s));
  }
}

struct ConvGeometry {
  std::size_t n, cin, h, w, cout, kh, kw, oh, ow, stride, pad;
  std::size_t cols_rows() const { return cin * kh * kw; }
  std::size_t cols_cols() const { return oh * ow; }
  bool is_pointwise() const { return kh == 1 && kw == 1 && stride == 1 && pad == 0; }
};

ConvGeometry conv_geometry(const Shape& in, const Shape& k, int stride, int padding) {
  require_rank(in, 4, "conv2d input");
  require_rank(k, 4, "conv2d kernel");
  if (stride < 1) throw ArgumentError("conv2d: stride must be >= 1, got " + std::to_string(stride));
  if (padding < 0) throw ArgumentError("conv2d: padding must be >= 0");
  if (in[1] != k[1]) {
    throw DimensionError("conv2d: input has " + std::to_string(in[1]) +
                         " channels but kernel expects " + std::to_string(k[1]));
  }
  ConvGeometry g{};
  g.n = in[0];
  g.cin = in[1];
  g.h = in[2];
  g.w = in[3];
  g.cout = k[0];
  g.kh = k[2];
  g.kw = k[3];
  g.stride = static_cast<std::size_t>(stride);
  g.pad = static_cast<std::size_t>(padding);
  if (g.kh > g.h + 2 * g.pad || g.kw > g.w + 2 * g.pad) {
    throw DimensionError("conv2d: kernel " + shape_str(k) + " larger than padded input " +
                         shape_str(in));
  }
  g.oh = conv_out_extent(g.h, g.kh, g.stride, g.pad);
  g.ow = conv_out_extent(g.w, g.kw, g.stride, g.pad);
  return g;
}

// cols[(c*kh + i)*kw + j][oy*ow + ox] = x[c][oy*s + i - p][ox*s + j - p] (0 outside).
template <typename T>
void im2col(const T* x, const ConvGeometry& g, T* cols) {
  const std::size_t P = g.cols_cols();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        T* row = cols + ((c * g.kh + i) * g.kw + j) * P;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          T* dst = row + oy * g.ow;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
            std::fill(dst, dst + g.ow, T(0));
            continue;
          }
          const T* src = x + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w))
                          ? T(0)
                          : src[static_cast<std::size_t>(ix)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, const ConvGeometry& g, T* dx) {
  const std::size_t P = g.cols_cols();
  for (std::size_t c = 0; c < g.cin; ++c) {
    for (std::size_t i = 0; i < g.kh; ++i) {
      for (std::size_t j = 0; j < g.kw; ++j) {
        const T* row = cols + ((c * g.kh + i) * g.kw + j) * P;
        for (std::size_t oy = 0; oy < g.oh; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * g.stride + i) -
                                    static_cast<std::ptrdiff_t>(g.pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
          T* dst = dx + (c * g.h + static_cast<std::size_t>(iy)) * g.w;
          for (std::size_t ox = 0; ox < g.ow; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * g.stride + j) -
                                      static_cast<std::ptrdiff_t>(g.pad);
            if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
            dst[static_cast<std::size_t>(ix)] += row[oy * g.ow + ox];
          }
        }
      }
    }
  }
}

// C[M,N] = A[M,K] * B[K,N]; each C[i][j] accumulates its K terms in ascending k.
template <typename T>
void gemm_nn(const T* A, const T* B, T* C, std::size_t M, std::size_t K, std::size_t N) {
  for (std::size_t i = 0; i < M; ++i) {
    T* c = C + i * N;
    std::fill(c, c + N, T(0));
    const T* a = A + i * K;
    for (std::size_t k = 0; k < K; ++k) {
      const T av = a[k];
      const T* b = B + k * N;
      for (std::size_t j = 0; j < N; ++j) c[j] += av * b[j];
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& kernel, int stride, int padding) {
  const auto g = conv_geometry(input.shape(), kernel.shape(), stride, padding);
  Tensor<T> out(Shape{g.n, g.cout, g.oh, g.ow});
  const std::size_t K = g.cols_rows(), P = g.cols_cols();
  const std::size_t in_stride = g.cin * g.h * g.w;
  parallel_for(g.n, [&](std::size_t n) {
    const T* x = input.ptr() + n * in_stride;
    T* y = out.ptr() + n * g.cout * P;
    if (g.is_pointwise()) {
      gemm_nn(kernel.ptr(), x, y, g.cout, K, P);
    } else {
      std::vector<T> cols(K * P);
      im2col(x, g, cols.data());
      gemm_nn(kernel.ptr(), cols.data(), y, g.cout, K, P);
    }
  });
  return out;
}

template <typename T>
Conv2dGrads<T> conv2d_backward(const Tensor<T>& input, const Tensor<T>& kernel,
                               const Tensor<T>& grad_out, int stride, int padding,
                               bool need_input_grad, bool need_kernel_grad) {
  const auto g = conv_geometry(input.shape(), kernel.shape(), stride, padding);
  if (grad_out.shape() != Shape{g.n, g.cout, g.oh, g.ow}) {
    throw DimensionError("conv2d_backward: grad shape " + shape_str(grad_out.shape()));
  }
  const std::size_t K = g.cols_rows(), P = g.cols_cols();
  const std::size_t in_stride = g.cin * g.h * g.w;
  Conv2dGrads<T> grads;
  if (need_input_grad) grads.input = Tensor<T>(input.shape());
  if (need_kernel_grad) grads.kernel = Tensor<T>(kernel.shape());

  // Per-sample kernel partials are summed in batch order afterwards, which keeps the
  // result independent of how samples were distributed over workers.
  std::vector<std::vector<T>> partial(need_kernel_grad ? g.n : 0);

  parallel_for(g.n, [&](std::size_t n) {
    const T* x = input.ptr() + n * in_stride;
    const T* dy = grad_out.ptr() + n * g.cout * P;
    std::vector<T> cols;
    const T* colsp = x;
    if (!g.is_pointwise()) {
      cols.resize(K * P);
      im2col(x, g, cols.data());
      colsp = cols.data();
    }
    if (need_kernel_grad) {
      // dW[co][k] = sum_p dy[co][p] * cols[k][p], via a transposed copy so the inner loop
      // runs contiguously over k.
      std::vector<T> cols_t(P * K);
      for (std::size_t k = 0; k < K; ++k)
        for (std::size_t p = 0; p < P; ++p) cols_t[p * K + k] = colsp[k * P + p];
      auto& dw = partial[n];
      dw.assign(g.cout * K, T(0));
      for (std::size_t co = 0; co < g.cout; ++co) {
        T* row = dw.data() + co * K;
        for (std::size_t p = 0; p < P; ++p) {
          const T d = dy[co * P + p];
          const T* ct = cols_t.data() + p * K;
          for (std::size_t k = 0; k < K; ++k) row[k] += d * ct[k];
        }
      }
    }
    if (need_input_grad) {
      std::vector<T> dcols(K * P, T(0));
      for (std::size_t co = 0; co < g.cout; ++co) {
        const T* wrow = kernel.ptr() + co * K;
        const T* drow = dy + co * P;
        for (std::size_t k = 0; k < K; ++k) {
          const T wv = wrow[k];
          T* dc = dcols.data() + k * P;
          for (std::size_t p = 0; p < P; ++p) dc[p] += wv * drow[p];
        }
      }
      T* dx = grads.input.ptr() + n * in_stride;
      if (g.is_pointwise()) {
        std::copy(dcols.begin(), dcols.end(), dx);
      } else {
        col2im_add(dcols.data(), g, dx);
      }
    }
  });

  if (need_kernel_grad) {
    T* dw = grads.kernel.ptr();
    for (std::size_t n = 0; n < g.n; ++n) {
      const auto& part = partial[n];
      for (std::size_t i = 0; i < part.size(); ++i) dw[i] += part[i];
    }
  }
  return grads;
}

namespace {

struct PoolGeometry {
  std::size_t n, c, h, w, k, stride, pad, oh, ow;
};

PoolGeometry pool_geometry(const Shape& in, int k, int stride, int padding) {
  require_rank(in, 4, "pool2d input");
  if (k < 1) throw ArgumentError("pool2d: window must be >= 1");
  if (stride < 1) throw ArgumentError("pool2d: stride must be >= 1");
  if (padding < 0 || padding >= k) throw ArgumentError("pool2d: padding must be in [0, k)");
  PoolGeometry g{in[0], in[1], in[2], in[3], static_cast<std::size_t>(k),
                 static_cast<std::size_t>(stride), static_cast<std::size_t>(padding), 0, 0};
  if (g.k > g.h + 2 * g.pad || g.k > g.w + 2 * g.pad) {
    throw DimensionError("pool2d: window " + std::to_string(k) + " larger than padded input " +
                         shape_str(in));
  }
  g.oh = conv_out_extent(g.h, g.k, g.stride, g.pad);
  g.ow = conv_out_extent(g.w, g.k, g.stride, g.pad);
  return g;
}

// Calls visit(iy, ix) for every in-bounds cell of output window (oy, ox).
template <typename F>
void for_window(const PoolGeometry& g, std::size_t oy, std::size_t ox, F&& visit) {
  for (std::size_t i = 0; i < g.k; ++i) {
    const std::ptrdiff_t iy =
        static_cast<std::ptrdiff_t>(oy * g.stride + i) - static_cast<std::ptrdiff_t>(g.pad);
    if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
    for (std::size_t j = 0; j < g.k; ++j) {
      const std::ptrdiff_t ix =
          static_cast<std::ptrdiff_t>(ox * g.stride + j) - static_cast<std::ptrdiff_t>(g.pad);
      if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) continue;
      visit(static_cast<std::size_t>(iy), static_cast<std::size_t>(ix));
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> pool2d(const Tensor<T>& input, PoolKind kind, int k, int stride, int padding) {
  const auto g = pool_geometry(input.shape(), k, stride, padding);
  Tensor<T> out(Shape{g.n, g.c, g.oh, g.ow});
  const T inv_area = T(1) / static_cast<T>(g.k * g.k);
  for (std::size_t nc = 0; nc < g.n * g.c; ++nc) {
    const T* x = input.ptr() + nc * g.h * g.w;
    T* y = out.ptr() + nc * g.oh * g.ow;
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        if (kind == PoolKind::kMax) {
          T best = -std::numeric_limits<T>::infinity();
          for_window(g, oy, ox, [&](std::size_t iy, std::size_t ix) {
            best = std::max(best, x[iy * g.w + ix]);
          });
          y[oy * g.ow + ox] = best;
        } else {
          T acc = 0;
          for_window(g, oy, ox, [&](std::size_t iy, std::size_t ix) { acc += x[iy * g.w + ix]; });
          y[oy * g.ow + ox] = acc * inv_area;
        }
      }
    }
  }
  return out;
}

template <typename T>
Tensor<T> pool2d_backward(const Tensor<T>& input, const Tensor<T>& grad_out, PoolKind kind, int k,
                          int stride, int padding) {
  const auto g = pool_geometry(input.shape(), k, stride, padding);
  Tensor<T> dx(input.shape());
  const T inv_area = T(1) / static_cast<T>(g.k * g.k);
  for (std::size_t nc = 0; nc < g.n * g.c; ++nc) {
    const T* x = input.ptr() + nc * g.h * g.w;
    const T* dy = grad_out.ptr() + nc * g.oh * g.ow;
    T* d = dx.ptr() + nc * g.h * g.w;
    for (std::size_t oy = 0; oy < g.oh; ++oy) {
      for (std::size_t ox = 0; ox < g.ow; ++ox) {
        const T go = dy[oy * g.ow + ox];
        if (kind == PoolKind::kMax) {
          T best = -std::numeric_limits<T>::infinity();
          std::size_t arg = 0;
          for_window(g, oy, ox, [&](std::size_t iy, std::size_t ix) {
            if (x[iy * g.w + ix] > best) {
              best = x[iy * g.w + ix];
              arg = iy * g.w + ix;
            }
          });
          d[arg] += go;
        } else {
          const T share = go * inv_area;
          for_window(g, oy, ox, [&](std::size_t iy, std::size_t ix) { d[iy * g.w + ix] += share; });
        }
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> global_pool(const Tensor<T>& input, PoolKind kind) {
  require_rank(input.shape(), 4, "global_pool input");
  const std::size_t N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  Tensor<T> out(Shape{N, C, 1, 1});
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* x = input.ptr() + nc * HW;
    if (kind == PoolKind::kMax) {
      out[nc] = *std::max_element(x, x + HW);
    } else {
      T acc = 0;
      for (std::size_t i = 0; i < HW; ++i) acc += x[i];
      out[nc] = acc / static_cast<T>(HW);
    }
  }
  return out;
}

template <typename T>
Tensor<T> global_pool_backward(const Tensor<T>& input, const Tensor<T>& grad_out, PoolKind kind) {
  const std::size_t N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  Tensor<T> dx(input.shape());
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const T* x = input.ptr() + nc * HW;
    T* d = dx.ptr() + nc * HW;
    if (kind == PoolKind::kMax) {
      d[std::max_element(x, x + HW) - x] += grad_out[nc];
    } else {
      const T share = grad_out[nc] / static_cast<T>(HW);
      for (std::size_t i = 0; i < HW; ++i) d[i] = share;
    }
  }
  return dx;
}

template <typename T>
Tensor<T> channel_pool(const Tensor<T>& input, PoolKind kind) {
  require_rank(input.shape(), 4, "channel_pool input");
  const std::size_t N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  Tensor<T> out(Shape{N, 1, input.dim(2), input.dim(3)});
  for (std::size_t n = 0; n < N; ++n) {
    const T* x = input.ptr() + n * C * HW;
    T* y = out.ptr() + n * HW;
    std::copy(x, x + HW, y);
    for (std::size_t c = 1; c < C; ++c) {
      const T* xc = x + c * HW;
      if (kind == PoolKind::kMax) {
        for (std::size_t i = 0; i < HW; ++i) y[i] = std::max(y[i], xc[i]);
      } else {
        for (std::size_t i = 0; i < HW; ++i) y[i] += xc[i];
      }
    }
    if (kind == PoolKind::kAvg) {
      const T inv = T(1) / static_cast<T>(C);
      for (std::size_t i = 0; i < HW; ++i) y[i] *= inv;
    }
  }
  return out;
}

template <typename T>
Tensor<T> channel_pool_backward(const Tensor<T>& input, const Tensor<T>& grad_out,
                                PoolKind kind) {
  const std::size_t N = input.dim(0), C = input.dim(1), HW = input.dim(2) * input.dim(3);
  Tensor<T> dx(input.shape());
  for (std::size_t n = 0; n < N; ++n) {
    const T* x = input.ptr() + n * C * HW;
    const T* dy = grad_out.ptr() + n * HW;
    T* d = dx.ptr() + n * C * HW;
    if (kind == PoolKind::kAvg) {
      const T inv = T(1) / static_cast<T>(C);
      for (std::size_t c = 0; c < C; ++c)
        for (std::size_t i = 0; i < HW; ++i) d[c * HW + i] = dy[i] * inv;
    } else {
      for (std::size_t i = 0; i < HW; ++i) {
        std::size_t arg = 0;
        for (std::size_t c = 1; c < C; ++c)
          if (x[c * HW + i] > x[arg * HW + i]) arg = c;
        d[arg * HW + i] += dy[i];
      }
    }
  }
  return dx;
}

template <typename T>
Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 4, "concat_channels");
  require_rank(b.shape(), 4, "concat_channels");
  if (a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2) || a.dim(3) != b.dim(3)) {
    throw DimensionError("concat_channels: " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  const std::size_t N = a.dim(0), HW = a.dim(2) * a.dim(3);
  const std::size_t ca = a.dim(1) * HW, cb = b.dim(1) * HW;
  Tensor<T> out(Shape{N, a.dim(1) + b.dim(1), a.dim(2), a.dim(3)});
  for (std::size_t n = 0; n < N; ++n) {
    std::copy(a.ptr() + n * ca, a.ptr() + (n + 1) * ca, out.ptr() + n * (ca + cb));
    std::copy(b.ptr() + n * cb, b.ptr() + (n + 1) * cb, out.ptr() + n * (ca + cb) + ca);
  }
  return out;
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  require_rank(a.shape(), 2, "matmul lhs");
  require_rank(b.shape(), 2, "matmul rhs");
  if (a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  Tensor<T> out(Shape{a.dim(0), b.dim(1)});
  gemm_nn(a.ptr(), b.ptr(), out.ptr(), a.dim(0), a.dim(1), b.dim(1));
  return out;
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank(a.shape(), 2, "transpose");
  const std::size_t R = a.dim(0), C = a.dim(1);
  Tensor<T> out(Shape{C, R});
  for (std::size_t r = 0; r < R; ++r)
    for (std::size_t c = 0; c < C; ++c) out[c * R + r] = a[r * C + c];
  return out;
}

bool broadcastable_to(const Shape& target, const Shape& b) {
  if (target.size() != b.size()) return false;
  for (std::size_t i = 0; i < b.size(); ++i)
    if (b[i] != target[i] && b[i] != 1) return false;
  return true;
}

namespace {

// Flat index into `b` for every flat index of the broadcast result shaped `target`.
std::vector<std::size_t> broadcast_index(const Shape& target, const Shape& b) {
  const std::size_t rank = target.size();
  std::vector<std::size_t> bstride(rank, 0);
  std::size_t s = 1;
  for (std::size_t i = rank; i-- > 0;) {
    bstride[i] = b[i] == 1 ? 0 : s;
    s *= b[i];
  }
  std::vector<std::size_t> idx(shape_numel(target));
  std::vector<std::size_t> counter(rank, 0);
  std::size_t off = 0;
  for (std::size_t flat = 0; flat < idx.size(); ++flat) {
    idx[flat] = off;
    for (std::size_t d = rank; d-- > 0;) {
      ++counter[d];
      off += bstride[d];
      if (counter[d] < target[d]) break;
      off -= bstride[d] * counter[d];
      counter[d] = 0;
    }
  }
  return idx;
}

template <typename T, typename Op>
Tensor<T> binary(const Tensor<T>& a, const Tensor<T>& b, Op op, const char* name) {
  Tensor<T> out(a.shape());
  if (a.shape() == b.shape()) {
    for (std::size_t i = 0; i < a.numel(); ++i) out[i] = op(a[i], b[i]);
    return out;
  }
  if (!broadcastable_to(a.shape(), b.shape())) {
    throw DimensionError(std::string(name) + ": cannot broadcast " + shape_str(b.shape()) +
                         " against " + shape_str(a.shape()));
  }
  const auto idx = broadcast_index(a.shape(), b.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = op(a[i], b[idx[i]]);
  return out;
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, [](T x, T y) { return x + y; }, "add");
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, [](T x, T y) { return x - y; }, "sub");
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  return binary(a, b, [](T x, T y) { return x * y; }, "mul");
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
  return out;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) out[i] = a[i] > T(0) ? a[i] : T(0);
  return out;
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.numel(); ++i) {
    const T x = a[i];
    // Split by sign so exp never overflows.
    if (x >= T(0)) {
      out[i] = T(1) / (T(1) + std::exp(-x));
    } else {
      const T e = std::exp(x);
      out[i] = e / (T(1) + e);
    }
  }
  return out;
}

template <typename T>
Tensor<T> reduce_to(const Tensor<T>& g, const Shape& target) {
  if (g.shape() == target) return g;
  if (!broadcastable_to(g.shape(), target)) {
    throw DimensionError("reduce_to: " + shape_str(g.shape()) + " -> " + shape_str(target));
  }
  Tensor<T> out(target);
  const auto idx = broadcast_index(g.shape(), target);
  for (std::size_t i = 0; i < g.numel(); ++i) out[idx[i]] += g[i];
  return out;
}

template <typename T>
T sum(const Tensor<T>& a) {
  T acc = 0;
  for (T v : a.data()) acc += v;
  return acc;
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& logits) {
  require_rank(logits.shape(), 2, "softmax");
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  Tensor<T> out(logits.shape());
  for (std::size_t n = 0; n < N; ++n) {
    const T* z = logits.ptr() + n * K;
    T* p = out.ptr() + n * K;
    const T m = *std::max_element(z, z + K);
    T denom = 0;
    for (std::size_t k = 0; k < K; ++k) {
      p[k] = std::exp(z[k] - m);
      denom += p[k];
    }
    for (std::size_t k = 0; k < K; ++k) p[k] /= denom;
  }
  return out;
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& logits) {
  require_rank(logits.shape(), 2, "log_softmax");
  const std::size_t N = logits.dim(0), K = logits.dim(1);
  Tensor<T> out(logits.shape());
  for (std::size_t n = 0; n < N; ++n) {
    const T* z = logits.ptr() + n * K;
    T* p = out.ptr() + n * K;
    const T m = *std::max_element(z, z + K);
    T denom = 0;
    for (std::size_t k = 0; k < K; ++k) denom += std::exp(z[k] - m);
    const T lse = m + std::log(denom);
    for (std::size_t k = 0; k < K; ++k) p[k] = z[k] - lse;
  }
  return out;
}

#define RNP_INSTANTIATE_KERNELS(T)                                                              \
  template Tensor<T> conv2d(const Tensor<T>&, const Tensor<T>&, int, int);                      \
  template Conv2dGrads<T> conv2d_backward(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, \
                                          int, int, bool, bool);                                \
  template Tensor<T> pool2d(const Tensor<T>&, PoolKind, int, int, int);                         \
  template Tensor<T> pool2d_backward(const Tensor<T>&, const Tensor<T>&, PoolKind, int, int,    \
                                     int);                                                      \
  template Tensor<T> global_pool(const Tensor<T>&, PoolKind);                                   \
  template Tensor<T> global_pool_backward(const Tensor<T>&, const Tensor<T>&, PoolKind);        \
  template Tensor<T> channel_pool(const Tensor<T>&, PoolKind);                                  \
  template Tensor<T> channel_pool_backward(const Tensor<T>&, const Tensor<T>&, PoolKind);       \
  template Tensor<T> concat_channels(const Tensor<T>&, const Tensor<T>&);                       \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                \
  template Tensor<T> transpose(const Tensor<T>&);                                               \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> sub(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> mul(const Tensor<T>&, const Tensor<T>&);                                   \
  template Tensor<T> scale(const Tensor<T>&, T);                                                \
  template Tensor<T> relu(const Tensor<T>&);                                                    \
  template Tensor<T> sigmoid(const Tensor<T>&);                                                 \
  template Tensor<T> reduce_to(const Tensor<T>&, const Shape&);                                 \
  template T sum(const Tensor<T>&);                                                             \
  template Tensor<T> softmax(const Tensor<T>&);                                                 \
  template Tensor<T> log_softmax(const Tensor<T>&);

RNP_INSTANTIATE_KERNELS(float)
RNP_INSTANTIATE_KERNELS(double)

}  // namespace rnp
