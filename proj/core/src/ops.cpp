#include "resnetplus/ops.hpp"

namespace rnp::ag {

namespace {

template <typename T>
void push(const std::shared_ptr<Node<T>>& node, Tensor<T>&& g) {
  if (node->requires_grad) node->accumulate(std::move(g));
}

}  // namespace

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& kernel, int stride, int padding) {
  return make_op<T>("conv2d", rnp::conv2d(x.value(), kernel.value(), stride, padding),
                    {&x, &kernel}, [&] {
                      return [xn = x.node(), kn = kernel.node(), stride,
                              padding](const Tensor<T>& g) {
                        auto grads = rnp::conv2d_backward(xn->value, kn->value, g, stride, padding,
                                                          xn->requires_grad, kn->requires_grad);
                        if (xn->requires_grad) xn->accumulate(std::move(grads.input));
                        if (kn->requires_grad) kn->accumulate(std::move(grads.kernel));
                      };
                    });
}

template <typename T>
Var<T> pool2d(const Var<T>& x, PoolKind kind, int k, int stride, int padding) {
  return make_op<T>("pool2d", rnp::pool2d(x.value(), kind, k, stride, padding), {&x}, [&] {
    return [xn = x.node(), kind, k, stride, padding](const Tensor<T>& g) {
      push(xn, rnp::pool2d_backward(xn->value, g, kind, k, stride, padding));
    };
  });
}

template <typename T>
Var<T> global_pool(const Var<T>& x, PoolKind kind) {
  return make_op<T>("global_pool", rnp::global_pool(x.value(), kind), {&x}, [&] {
    return [xn = x.node(), kind](const Tensor<T>& g) {
      push(xn, rnp::global_pool_backward(xn->value, g, kind));
    };
  });
}

template <typename T>
Var<T> channel_pool(const Var<T>& x, PoolKind kind) {
  return make_op<T>("channel_pool", rnp::channel_pool(x.value(), kind), {&x}, [&] {
    return [xn = x.node(), kind](const Tensor<T>& g) {
      push(xn, rnp::channel_pool_backward(xn->value, g, kind));
    };
  });
}

template <typename T>
Var<T> concat_channels(const Var<T>& a, const Var<T>& b) {
  return make_op<T>("concat_channels", rnp::concat_channels(a.value(), b.value()), {&a, &b}, [&] {
    return [an = a.node(), bn = b.node()](const Tensor<T>& g) {
      const std::size_t N = g.dim(0), HW = g.dim(2) * g.dim(3);
      const std::size_t ca = an->value.dim(1) * HW, cb = bn->value.dim(1) * HW;
      if (an->requires_grad) {
        Tensor<T> ga(an->value.shape());
        for (std::size_t n = 0; n < N; ++n)
          std::copy(g.ptr() + n * (ca + cb), g.ptr() + n * (ca + cb) + ca, ga.ptr() + n * ca);
        an->accumulate(std::move(ga));
      }
      if (bn->requires_grad) {
        Tensor<T> gb(bn->value.shape());
        for (std::size_t n = 0; n < N; ++n)
          std::copy(g.ptr() + n * (ca + cb) + ca, g.ptr() + (n + 1) * (ca + cb),
                    gb.ptr() + n * cb);
        bn->accumulate(std::move(gb));
      }
    };
  });
}

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  return make_op<T>("matmul", rnp::matmul(a.value(), b.value()), {&a, &b}, [&] {
    return [an = a.node(), bn = b.node()](const Tensor<T>& g) {
      if (an->requires_grad) an->accumulate(rnp::matmul(g, rnp::transpose(bn->value)));
      if (bn->requires_grad) bn->accumulate(rnp::matmul(rnp::transpose(an->value), g));
    };
  });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  return make_op<T>("transpose", rnp::transpose(a.value()), {&a}, [&] {
    return [an = a.node()](const Tensor<T>& g) { push(an, rnp::transpose(g)); };
  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  return make_op<T>("reshape", a.value().reshaped(shape), {&a}, [&] {
    return [an = a.node()](const Tensor<T>& g) { push(an, g.reshaped(an->value.shape())); };
  });
}

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  return make_op<T>("add", rnp::add(a.value(), b.value()), {&a, &b}, [&] {
    return [an = a.node(), bn = b.node()](const Tensor<T>& g) {
      if (an->requires_grad) an->accumulate(g);
      if (bn->requires_grad) bn->accumulate(rnp::reduce_to(g, bn->value.shape()));
    };
  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  return make_op<T>("sub", rnp::sub(a.value(), b.value()), {&a, &b}, [&] {
    return [an = a.node(), bn = b.node()](const Tensor<T>& g) {
      if (an->requires_grad) an->accumulate(g);
      if (bn->requires_grad) bn->accumulate(rnp::scale(rnp::reduce_to(g, bn->value.shape()), T(-1)));
    };
  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  return make_op<T>("mul", rnp::mul(a.value(), b.value()), {&a, &b}, [&] {
    return [an = a.node(), bn = b.node()](const Tensor<T>& g) {
      if (an->requires_grad) an->accumulate(rnp::mul(g, bn->value));
      if (bn->requires_grad) {
        bn->accumulate(rnp::reduce_to(rnp::mul(g, an->value), bn->value.shape()));
      }
    };
  });
}

template <typename T>
Var<T> scale(const Var<T>& a, T s) {
  return make_op<T>("scale", rnp::scale(a.value(), s), {&a}, [&] {
    return [an = a.node(), s](const Tensor<T>& g) { push(an, rnp::scale(g, s)); };
  });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return make_op<T>("relu", rnp::relu(a.value()), {&a}, [&] {
    return [an = a.node()](const Tensor<T>& g) {
      Tensor<T> d(g.shape());
      const auto& x = an->value;
      for (std::size_t i = 0; i < d.numel(); ++i) d[i] = x[i] > T(0) ? g[i] : T(0);
      push(an, std::move(d));
    };
  });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  Tensor<T> y = rnp::sigmoid(a.value());
  return make_op<T>("sigmoid", y, {&a}, [&] {
    return [an = a.node(), y](const Tensor<T>& g) {
      Tensor<T> d(g.shape());
      for (std::size_t i = 0; i < d.numel(); ++i) d[i] = g[i] * y[i] * (T(1) - y[i]);
      push(an, std::move(d));
    };
  });
}

template <typename T>
Var<T> sum(const Var<T>& a) {
  return make_op<T>("sum", Tensor<T>::scalar(rnp::sum(a.value())), {&a}, [&] {
    return [an = a.node()](const Tensor<T>& g) {
      push(an, Tensor<T>(an->value.shape(), g[0]));
    };
  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  const T inv = T(1) / static_cast<T>(a.value().numel());
  return make_op<T>("mean", Tensor<T>::scalar(rnp::sum(a.value()) * inv), {&a}, [&] {
    return [an = a.node(), inv](const Tensor<T>& g) {
      push(an, Tensor<T>(an->value.shape(), g[0] * inv));
    };
  });
}

template <typename T>
Var<T> softmax(const Var<T>& logits) {
  Tensor<T> p = rnp::softmax(logits.value());
  return make_op<T>("softmax", p, {&logits}, [&] {
    return [ln = logits.node(), p](const Tensor<T>& g) {
      const std::size_t N = p.dim(0), K = p.dim(1);
      Tensor<T> d(p.shape());
      for (std::size_t n = 0; n < N; ++n) {
        T dot = 0;
        for (std::size_t k = 0; k < K; ++k) dot += g[n * K + k] * p[n * K + k];
        for (std::size_t k = 0; k < K; ++k) d[n * K + k] = p[n * K + k] * (g[n * K + k] - dot);
      }
      push(ln, std::move(d));
    };
  });
}

#define RNP_INSTANTIATE_AG(T)                                        \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, int, int);    \
  template Var<T> pool2d(const Var<T>&, PoolKind, int, int, int);    \
  template Var<T> global_pool(const Var<T>&, PoolKind);              \
  template Var<T> channel_pool(const Var<T>&, PoolKind);             \
  template Var<T> concat_channels(const Var<T>&, const Var<T>&);     \
  template Var<T> matmul(const Var<T>&, const Var<T>&);              \
  template Var<T> transpose(const Var<T>&);                          \
  template Var<T> reshape(const Var<T>&, Shape);                     \
  template Var<T> add(const Var<T>&, const Var<T>&);                 \
  template Var<T> sub(const Var<T>&, const Var<T>&);                 \
  template Var<T> mul(const Var<T>&, const Var<T>&);                 \
  template Var<T> scale(const Var<T>&, T);                           \
  template Var<T> relu(const Var<T>&);                               \
  template Var<T> sigmoid(const Var<T>&);                            \
  template Var<T> sum(const Var<T>&);                                \
  template Var<T> mean(const Var<T>&);                               \
  template Var<T> softmax(const Var<T>&);

RNP_INSTANTIATE_AG(float)
RNP_INSTANTIATE_AG(double)

}  // namespace rnp::ag
