#include "resnetplus/layers.hpp"

#include <cmath>

namespace rnp {

template <typename T>
Tensor<T> he_init(const Shape& shape, Rng& rng) {
  std::size_t fan_in = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) fan_in *= shape[i];
  std::normal_distribution<T> dist(T(0), static_cast<T>(std::sqrt(2.0 / static_cast<double>(fan_in))));
  Tensor<T> t(shape);
  for (auto& v : t.data()) v = dist(rng);
  return t;
}

template <typename T>
Conv2d<T>::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel,
                  int stride, int padding, Rng& rng)
    : weight_(he_init<T>(Shape{out_channels, in_channels, kernel, kernel}, rng), true),
      stride_(stride),
      padding_(padding) {
  if (stride < 1) throw ArgumentError("Conv2d: stride must be >= 1");
}

template <typename T>
void Conv2d<T>::visit(const std::string& prefix, StateVisitor<T>& v) {
  if (v.parameter) v.parameter(join_name(prefix, "weight"), weight_);
}

template <typename T>
BatchNorm2d<T>::BatchNorm2d(std::size_t channels, BatchNormConfig<T> cfg)
    : gamma_(Tensor<T>(Shape{channels}, T(1)), true),
      beta_(Tensor<T>(Shape{channels}, T(0)), true),
      running_mean_(Shape{channels}, T(0)),
      running_var_(Shape{channels}, T(1)),
      cfg_(cfg) {}

template <typename T>
Var<T> BatchNorm2d<T>::forward(const Var<T>& x, Mode mode) {
  if (mode == Mode::kEval) {
    return batch_norm_eval(x, gamma_, beta_, running_mean_, running_var_, cfg_.eps);
  }
  Tensor<T> mean, var;
  Var<T> y = batch_norm_train(x, gamma_, beta_, cfg_.eps, &mean, &var);
  const double m = static_cast<double>(x.value().numel() / x.value().dim(1));
  const T unbias = static_cast<T>(m / (m - 1.0));
  for (std::size_t c = 0; c < mean.numel(); ++c) {
    running_mean_[c] = (T(1) - cfg_.momentum) * running_mean_[c] + cfg_.momentum * mean[c];
    running_var_[c] = (T(1) - cfg_.momentum) * running_var_[c] + cfg_.momentum * var[c] * unbias;
  }
  return y;
}

template <typename T>
void BatchNorm2d<T>::visit(const std::string& prefix, StateVisitor<T>& v) {
  if (v.parameter) {
    v.parameter(join_name(prefix, "gamma"), gamma_);
    v.parameter(join_name(prefix, "beta"), beta_);
  }
  if (v.buffer) {
    v.buffer(join_name(prefix, "running_mean"), running_mean_);
    v.buffer(join_name(prefix, "running_var"), running_var_);
  }
}

namespace {

struct BnLayout {
  std::size_t n, c, s;  // batch, channels, spatial elements per channel
};

template <typename T>
BnLayout bn_layout(const Tensor<T>& x, const Tensor<T>& gamma) {
  if (x.rank() != 4 && x.rank() != 2) {
    throw DimensionError("batch_norm: expected [N,C,H,W] or [N,C], got " + shape_str(x.shape()));
  }
  BnLayout l{x.dim(0), x.dim(1), x.numel() / (x.dim(0) * x.dim(1))};
  if (gamma.shape() != Shape{l.c}) {
    throw DimensionError("batch_norm: " + std::to_string(l.c) + " channels but gamma is " +
                         shape_str(gamma.shape()));
  }
  return l;
}

}  // namespace

template <typename T>
Var<T> batch_norm_train(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps,
                        Tensor<T>* batch_mean, Tensor<T>* batch_var) {
  const auto& xv = x.value();
  const auto L = bn_layout(xv, gamma.value());
  const std::size_t m = L.n * L.s;
  if (m < 2) {
    throw DegenerateBatchError("batch_norm: train mode needs >= 2 values per channel, got " +
                               std::to_string(m) + " for input " + shape_str(xv.shape()));
  }
  Tensor<T> mean(Shape{L.c}), var(Shape{L.c}), inv_std(Shape{L.c});
  for (std::size_t c = 0; c < L.c; ++c) {
    T acc = 0;
    for (std::size_t n = 0; n < L.n; ++n) {
      const T* p = xv.ptr() + (n * L.c + c) * L.s;
      for (std::size_t i = 0; i < L.s; ++i) acc += p[i];
    }
    const T mu = acc / static_cast<T>(m);
    T sq = 0;
    for (std::size_t n = 0; n < L.n; ++n) {
      const T* p = xv.ptr() + (n * L.c + c) * L.s;
      for (std::size_t i = 0; i < L.s; ++i) sq += (p[i] - mu) * (p[i] - mu);
    }
    mean[c] = mu;
    var[c] = sq / static_cast<T>(m);
    inv_std[c] = T(1) / std::sqrt(var[c] + eps);
  }
  Tensor<T> xhat(xv.shape()), y(xv.shape());
  const auto& g = gamma.value();
  const auto& b = beta.value();
  for (std::size_t n = 0; n < L.n; ++n) {
    for (std::size_t c = 0; c < L.c; ++c) {
      const std::size_t off = (n * L.c + c) * L.s;
      for (std::size_t i = 0; i < L.s; ++i) {
        xhat[off + i] = (xv[off + i] - mean[c]) * inv_std[c];
        y[off + i] = g[c] * xhat[off + i] + b[c];
      }
    }
  }
  if (batch_mean) *batch_mean = mean;
  if (batch_var) *batch_var = var;
  return make_op<T>("batch_norm_train", std::move(y), {&x, &gamma, &beta}, [&] {
    return [xn = x.node(), gn = gamma.node(), bn = beta.node(), xhat = std::move(xhat),
            inv_std, L, m](const Tensor<T>& dy) {
      Tensor<T> dgamma(Shape{L.c}), dbeta(Shape{L.c});
      for (std::size_t c = 0; c < L.c; ++c) {
        T sg = 0, sb = 0;
        for (std::size_t n = 0; n < L.n; ++n) {
          const std::size_t off = (n * L.c + c) * L.s;
          for (std::size_t i = 0; i < L.s; ++i) {
            sb += dy[off + i];
            sg += dy[off + i] * xhat[off + i];
          }
        }
        dgamma[c] = sg;
        dbeta[c] = sb;
      }
      if (xn->requires_grad) {
        Tensor<T> dx(xn->value.shape());
        const auto& gv = gn->value;
        const T inv_m = T(1) / static_cast<T>(m);
        for (std::size_t n = 0; n < L.n; ++n) {
          for (std::size_t c = 0; c < L.c; ++c) {
            const std::size_t off = (n * L.c + c) * L.s;
            const T k = gv[c] * inv_std[c];
            for (std::size_t i = 0; i < L.s; ++i) {
              dx[off + i] =
                  k * (dy[off + i] - inv_m * dbeta[c] - xhat[off + i] * inv_m * dgamma[c]);
            }
          }
        }
        xn->accumulate(std::move(dx));
      }
      if (gn->requires_grad) gn->accumulate(std::move(dgamma));
      if (bn->requires_grad) bn->accumulate(std::move(dbeta));
    };
  });
}

template <typename T>
Var<T> batch_norm_eval(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                       const Tensor<T>& mean, const Tensor<T>& var, T eps) {
  const auto& xv = x.value();
  const auto L = bn_layout(xv, gamma.value());
  Tensor<T> inv_std(Shape{L.c});
  for (std::size_t c = 0; c < L.c; ++c) inv_std[c] = T(1) / std::sqrt(var[c] + eps);
  Tensor<T> y(xv.shape());
  const auto& g = gamma.value();
  const auto& b = beta.value();
  for (std::size_t n = 0; n < L.n; ++n) {
    for (std::size_t c = 0; c < L.c; ++c) {
      const std::size_t off = (n * L.c + c) * L.s;
      for (std::size_t i = 0; i < L.s; ++i) {
        y[off + i] = g[c] * ((xv[off + i] - mean[c]) * inv_std[c]) + b[c];
      }
    }
  }
  return make_op<T>("batch_norm_eval", std::move(y), {&x, &gamma, &beta}, [&] {
    return [xn = x.node(), gn = gamma.node(), bn = beta.node(), mean, inv_std,
            L](const Tensor<T>& dy) {
      Tensor<T> dx(xn->value.shape()), dgamma(Shape{L.c}), dbeta(Shape{L.c});
      const auto& xv = xn->value;
      const auto& gv = gn->value;
      for (std::size_t n = 0; n < L.n; ++n) {
        for (std::size_t c = 0; c < L.c; ++c) {
          const std::size_t off = (n * L.c + c) * L.s;
          for (std::size_t i = 0; i < L.s; ++i) {
            dx[off + i] = dy[off + i] * gv[c] * inv_std[c];
            dgamma[c] += dy[off + i] * (xv[off + i] - mean[c]) * inv_std[c];
            dbeta[c] += dy[off + i];
          }
        }
      }
      if (xn->requires_grad) xn->accumulate(std::move(dx));
      if (gn->requires_grad) gn->accumulate(std::move(dgamma));
      if (bn->requires_grad) bn->accumulate(std::move(dbeta));
    };
  });
}

template <typename T>
Linear<T>::Linear(std::size_t in_features, std::size_t out_features, Rng& rng, LinearInit init)
    : bias_(Tensor<T>(Shape{out_features}, T(0)), true) {
  const Shape shape{out_features, in_features};
  if (init == LinearInit::kHe) {
    weight_ = Var<T>(he_init<T>(shape, rng), true);
    return;
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(in_features));
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor<T> w(shape);
  for (auto& v : w.data()) v = static_cast<T>(dist(rng));
  weight_ = Var<T>(std::move(w), true);
}

template <typename T>
Var<T> Linear<T>::forward(const Var<T>& x) const {
  if (x.value().rank() != 2 || x.shape()[1] != weight_.shape()[1]) {
    throw DimensionError("linear: input " + shape_str(x.shape()) + " vs weight " +
                         shape_str(weight_.shape()));
  }
  auto y = ag::matmul(x, ag::transpose(weight_));
  return ag::add(y, ag::reshape(bias_, Shape{1, bias_.shape()[0]}));
}

template <typename T>
void Linear<T>::visit(const std::string& prefix, StateVisitor<T>& v) {
  if (v.parameter) {
    v.parameter(join_name(prefix, "weight"), weight_);
    v.parameter(join_name(prefix, "bias"), bias_);
  }
}

template <typename T>
Dropout<T>::Dropout(double rate, std::uint64_t seed) : rate_(rate), rng_(seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw ArgumentError("dropout: rate must be in [0, 1), got " + std::to_string(rate));
  }
}

template <typename T>
Var<T> Dropout<T>::forward(const Var<T>& x, Mode mode) {
  if (mode == Mode::kEval || rate_ == 0.0) return x;
  std::bernoulli_distribution keep(1.0 - rate_);
  const T survivor = static_cast<T>(1.0 / (1.0 - rate_));
  Tensor<T> mask(x.shape());
  for (auto& m : mask.data()) m = keep(rng_) ? survivor : T(0);
  return ag::mul(x, Var<T>(std::move(mask)));
}

#define RNP_INSTANTIATE_LAYERS(T)                                                              \
  template Tensor<T> he_init<T>(const Shape&, Rng&);                                           \
  template class Conv2d<T>;                                                                    \
  template class BatchNorm2d<T>;                                                               \
  template class Linear<T>;                                                                    \
  template class Dropout<T>;                                                                   \
  template Var<T> batch_norm_train(const Var<T>&, const Var<T>&, const Var<T>&, T, Tensor<T>*, \
                                   Tensor<T>*);                                                \
  template Var<T> batch_norm_eval(const Var<T>&, const Var<T>&, const Var<T>&,                 \
                                  const Tensor<T>&, const Tensor<T>&, T);

RNP_INSTANTIATE_LAYERS(float)
RNP_INSTANTIATE_LAYERS(double)

}  // namespace rnp
