#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "resnetplus/autograd.hpp"
#include "resnetplus/checkpoint.hpp"
#include "resnetplus/data.hpp"
#include "resnetplus/metrics.hpp"
#include "resnetplus/model.hpp"

namespace rnp {

/// Mean over the batch of -log softmax(logits)[label], via a stable log-sum-exp.
template <typename T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<int>& labels);

struct TrainConfig {
  double lr0 = 0.01;
  int t_max_epochs = 40;
  double eta_min = 1e-6;
  double momentum = 0.9;
  std::size_t batch_size = 16;
  int epochs = 200;
  double ema_decay = 0.995;
  std::uint64_t seed = 0;
  bool eval_with_ema = true;
  bool no_restart = false;       // hold eta_min after the first cycle
  bool track_train_acc = true;   // eval-mode accuracy of the raw weights on the train split
  std::string checkpoint_path;   // empty = keep the best state in memory only

  void validate() const;
};

/// eta_min + (lr0 - eta_min)(1 + cos(pi * (epoch mod t_max) / t_max)) / 2.
double cosine_lr(int epoch, const TrainConfig& cfg);

/// Heavy-ball step: v = mu v + g; w -= lr v.
template <typename T>
void sgd_step(Tensor<T>& w, const Tensor<T>& g, Tensor<T>& v, double momentum, double lr);

/// shadow = decay shadow + (1 - decay) value.
template <typename T>
void ema_update(Tensor<T>& shadow, const Tensor<T>& value, double decay);

class Sgd {
 public:
  explicit Sgd(double momentum) : momentum_(momentum) {}
  /// Velocities are created on the first step and tied to parameter order afterwards.
  void step(std::vector<std::pair<std::string, Var<float>>>& params, double lr);
  std::size_t steps() const { return steps_; }
  double lr() const { return lr_; }
  const std::vector<Tensor<float>>& velocity() const { return velocity_; }

 private:
  double momentum_;
  double lr_ = 0.0;
  std::size_t steps_ = 0;
  std::vector<Tensor<float>> velocity_;
};

/// Shadow copies of every parameter and batch-norm buffer.
class Ema {
 public:
  Ema(ResNetPlus<float>& model, double decay);
  void update(ResNetPlus<float>& model);
  const StateDict<float>& shadow() const { return shadow_; }
  double decay() const { return decay_; }

 private:
  double decay_;
  StateDict<float> shadow_;
};

/// Loads `state` into the model for the lifetime of the guard, then restores the original.
class WeightSwap {
 public:
  WeightSwap(ResNetPlus<float>& model, const StateDict<float>& state);
  ~WeightSwap();
  WeightSwap(const WeightSwap&) = delete;
  WeightSwap& operator=(const WeightSwap&) = delete;

 private:
  ResNetPlus<float>& model_;
  StateDict<float> saved_;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = -1.0;  // -1 when not tracked
  double val_acc = 0.0;
  bool improved = false;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  double best_val_acc = -1.0;
  int best_epoch = -1;
  std::size_t steps = 0;
  std::size_t skipped_batches = 0;  // single-sample batches (batch norm undefined)
  std::string checkpoint_path;
  StateDict<float> best_raw;  // state at the best epoch
  StateDict<float> best_ema;

  /// epoch,lr,train_loss,train_acc,val_acc
  std::string to_csv() const;
  /// key = value summary followed by the per-epoch table.
  std::string to_text() const;
};

struct TrainHooks {
  std::function<void(const EpochRecord&)> on_epoch;
};

/// Trains with shuffled batches, cosine-scheduled SGD and per-step EMA; validates after
/// every epoch and keeps (and, with a checkpoint path, saves) the state whenever the
/// validation accuracy strictly improves. Throws DivergenceError on a non-finite loss.
TrainReport train(ResNetPlus<float>& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, const PreprocessOptions& prep,
                  const CheckpointMeta& meta = {}, const TrainHooks& hooks = {});

/// Softmax probabilities [N,K] in eval mode.
Tensor<double> predict_proba(ResNetPlus<float>& model, const Tensor<float>& images);

/// Eval-mode accuracy over a dataset (eval preprocessing, batches of `batch_size`).
double accuracy(ResNetPlus<float>& model, const Dataset& ds, const PreprocessOptions& prep,
                std::size_t batch_size = 16);

/// Eval-mode forward of every sample (one at a time, timed), then the full metrics report.
MetricsReport evaluate(ResNetPlus<float>& model, const Dataset& ds, const PreprocessOptions& prep,
                       const std::string& weights_label = "raw");

/// Cross-entropy of the first shuffled training batch (train mode, no update).
double first_batch_loss(ResNetPlus<float>& model, const Dataset& ds, const TrainConfig& cfg,
                        const PreprocessOptions& prep);

}  // namespace rnp
