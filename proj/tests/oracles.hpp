#pragma once

// Independent reference implementations used as test oracles. Plain loops, no shared code
// with the library kernels.

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "resnetplus/tensor.hpp"

namespace oracle {

using rnp::Shape;
using rnp::Tensor;

template <typename T = double>
Tensor<T> random(const Shape& shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = static_cast<T>(u(rng));
  return t;
}

/// Direct 6-deep loop convolution with zero padding.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& k, int stride, int pad) {
  const long n = x.dim(0), ci = x.dim(1), h = x.dim(2), w = x.dim(3);
  const long co = k.dim(0), kh = k.dim(2), kw = k.dim(3);
  const long oh = (h + 2 * pad - kh) / stride + 1, ow = (w + 2 * pad - kw) / stride + 1;
  Tensor<T> y({static_cast<std::size_t>(n), static_cast<std::size_t>(co), static_cast<std::size_t>(oh),
               static_cast<std::size_t>(ow)});
  for (long b = 0; b < n; ++b)
    for (long o = 0; o < co; ++o)
      for (long i = 0; i < oh; ++i)
        for (long j = 0; j < ow; ++j) {
          double acc = 0.0;
          for (long c = 0; c < ci; ++c)
            for (long u = 0; u < kh; ++u)
              for (long v = 0; v < kw; ++v) {
                const long yy = i * stride - pad + u, xx = j * stride - pad + v;
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                acc += static_cast<double>(x.at(b, c, yy, xx)) * static_cast<double>(k.at(o, c, u, v));
              }
          y.at(b, o, i, j) = static_cast<T>(acc);
        }
  return y;
}

/// Windowed max (padding ignored) or average (padding counted as zeros).
template <typename T>
Tensor<T> pool2d(const Tensor<T>& x, bool max, int k, int stride, int pad) {
  const long n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const long oh = (h + 2 * pad - k) / stride + 1, ow = (w + 2 * pad - k) / stride + 1;
  Tensor<T> y({x.dim(0), x.dim(1), static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
  for (long b = 0; b < n; ++b)
    for (long ch = 0; ch < c; ++ch)
      for (long i = 0; i < oh; ++i)
        for (long j = 0; j < ow; ++j) {
          double best = -std::numeric_limits<double>::infinity(), sum = 0.0;
          for (long u = 0; u < k; ++u)
            for (long v = 0; v < k; ++v) {
              const long yy = i * stride - pad + u, xx = j * stride - pad + v;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              best = std::max(best, static_cast<double>(x.at(b, ch, yy, xx)));
              sum += x.at(b, ch, yy, xx);
            }
          y.at(b, ch, i, j) = static_cast<T>(max ? best : sum / (k * k));
        }
  return y;
}

inline double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Channel gate from plain loops: sigmoid(W1 relu(W0 avg) + W1 relu(W0 max)).
inline Tensor<double> channel_gate(const Tensor<double>& m, const Tensor<double>& w0, const Tensor<double>& w1) {
  const std::size_t n = m.dim(0), c = m.dim(1), h = m.dim(2), w = m.dim(3), r = w0.dim(0);
  Tensor<double> out({n, c, 1, 1});
  for (std::size_t b = 0; b < n; ++b) {
    std::vector<double> avg(c, 0.0), mx(c, -1e300);
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j) {
          avg[ch] += m.at(b, ch, i, j) / static_cast<double>(h * w);
          mx[ch] = std::max(mx[ch], m.at(b, ch, i, j));
        }
    auto mlp = [&](const std::vector<double>& p) {
      std::vector<double> hidden(r, 0.0), o(c, 0.0);
      for (std::size_t k = 0; k < r; ++k) {
        for (std::size_t ch = 0; ch < c; ++ch) hidden[k] += w0.at(k, ch, 0, 0) * p[ch];
        hidden[k] = std::max(0.0, hidden[k]);
      }
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t k = 0; k < r; ++k) o[ch] += w1.at(ch, k, 0, 0) * hidden[k];
      return o;
    };
    const auto a = mlp(avg), x = mlp(mx);
    for (std::size_t ch = 0; ch < c; ++ch) out.at(b, ch, 0, 0) = sigmoid(a[ch] + x[ch]);
  }
  return out;
}

// Spatial gate from plain loops: sigmoid(conv_k([mean_c, max_c])) with zero padding k/2.
inline Tensor<double> spatial_gate(const Tensor<double>& f, const Tensor<double>& k) {
  const std::size_t n = f.dim(0), c = f.dim(1), h = f.dim(2), w = f.dim(3);
  const long ks = static_cast<long>(k.dim(2)), pad = ks / 2;
  Tensor<double> stacked({n, 2, h, w});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < h; ++i)
      for (std::size_t j = 0; j < w; ++j) {
        double s = 0, mx = -1e300;
        for (std::size_t ch = 0; ch < c; ++ch) {
          s += f.at(b, ch, i, j);
          mx = std::max(mx, f.at(b, ch, i, j));
        }
        stacked.at(b, 0, i, j) = s / static_cast<double>(c);
        stacked.at(b, 1, i, j) = mx;
      }
  auto pre = conv2d(stacked, k, 1, static_cast<int>(pad));
  for (auto& v : pre.data()) v = sigmoid(v);
  return pre;
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) {
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  }
  return m;
}

}  // namespace oracle
