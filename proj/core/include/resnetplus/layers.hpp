#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "resnetplus/autograd.hpp"
#include "resnetplus/ops.hpp"

namespace rnp {

enum class Mode { kTrain, kEval };

using Rng = std::mt19937_64;

/// Visitor over named state. Parameters are trainable; buffers (running statistics)
/// are persisted but never receive gradients.
template <typename T>
struct StateVisitor {
  std::function<void(const std::string& name, Var<T>& param)> parameter;
  std::function<void(const std::string& name, Tensor<T>& buffer)> buffer;
};

inline std::string join_name(const std::string& prefix, const std::string& leaf) {
  return prefix.empty() ? leaf : prefix + "." + leaf;
}

/// Samples normal(0, sqrt(2 / fan_in)) where fan_in = product of all extents but the first.
template <typename T>
Tensor<T> he_init(const Shape& shape, Rng& rng);

template <typename T>
class Conv2d {
 public:
  Conv2d() = default;
  /// Bias-free; every convolution here feeds a batch norm or an attention gate.
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, int stride,
         int padding, Rng& rng);

  Var<T> forward(const Var<T>& x) const { return ag::conv2d(x, weight_, stride_, padding_); }
  void visit(const std::string& prefix, StateVisitor<T>& v);

  Var<T>& weight() { return weight_; }
  const Var<T>& weight() const { return weight_; }
  int stride() const { return stride_; }
  int padding() const { return padding_; }
  std::size_t in_channels() const { return weight_.shape()[1]; }
  std::size_t out_channels() const { return weight_.shape()[0]; }

 private:
  Var<T> weight_;
  int stride_ = 1;
  int padding_ = 0;
};

template <typename T>
struct BatchNormConfig {
  T eps = T(1e-5);
  T momentum = T(0.1);
};

template <typename T>
class BatchNorm2d {
 public:
  BatchNorm2d() = default;
  explicit BatchNorm2d(std::size_t channels, BatchNormConfig<T> cfg = {});

  /// Train mode normalizes with batch statistics and updates the running estimates
  /// (unbiased variance); eval mode uses the running estimates only.
  Var<T> forward(const Var<T>& x, Mode mode);
  void visit(const std::string& prefix, StateVisitor<T>& v);

  Var<T>& gamma() { return gamma_; }
  Var<T>& beta() { return beta_; }
  Tensor<T>& running_mean() { return running_mean_; }
  Tensor<T>& running_var() { return running_var_; }
  const BatchNormConfig<T>& config() const { return cfg_; }

 private:
  Var<T> gamma_, beta_;
  Tensor<T> running_mean_, running_var_;
  BatchNormConfig<T> cfg_;
};

/// Differentiable batch norm over [N,C,H,W] (or [N,C]) with batch statistics.
/// Writes the biased batch mean/variance to the optional outputs.
template <typename T>
Var<T> batch_norm_train(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps,
                        Tensor<T>* batch_mean = nullptr, Tensor<T>* batch_var = nullptr);

/// Differentiable batch norm with fixed statistics.
template <typename T>
Var<T> batch_norm_eval(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta,
                       const Tensor<T>& mean, const Tensor<T>& var, T eps);

enum class LinearInit {
  kHe,            // N(0, 2/fan_in)
  kFanInUniform,  // U(-1/sqrt(fan_in), 1/sqrt(fan_in)); keeps initial logits near uniform
};

template <typename T>
class Linear {
 public:
  Linear() = default;
  Linear(std::size_t in_features, std::size_t out_features, Rng& rng,
         LinearInit init = LinearInit::kHe);

  /// x [N,in] -> x W^T + b.
  Var<T> forward(const Var<T>& x) const;
  void visit(const std::string& prefix, StateVisitor<T>& v);

  Var<T>& weight() { return weight_; }
  Var<T>& bias() { return bias_; }

 private:
  Var<T> weight_, bias_;
};

template <typename T>
class Dropout {
 public:
  explicit Dropout(double rate = 0.5, std::uint64_t seed = 0);

  /// Inverted dropout: train mode zeroes with probability `rate` and scales survivors
  /// by 1/(1-rate); eval mode is the identity.
  Var<T> forward(const Var<T>& x, Mode mode);
  void reseed(std::uint64_t seed) { rng_.seed(seed); }
  double rate() const { return rate_; }

 private:
  double rate_;
  Rng rng_;
};

}  // namespace rnp
