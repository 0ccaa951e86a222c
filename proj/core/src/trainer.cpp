#include "resnetplus/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "resnetplus/kernels.hpp"

namespace rnp {

template <typename T>
Var<T> cross_entropy(const Var<T>& logits, const std::vector<int>& labels) {
  const Tensor<T>& z = logits.value();
  if (z.rank() != 2) throw DimensionError("cross_entropy: logits must be [N,K], got " + shape_str(z.shape()));
  const std::size_t n = z.dim(0), k = z.dim(1);
  if (labels.size() != n) {
    throw DimensionError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  for (int y : labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= k) {
      throw ArgumentError("cross_entropy: label " + std::to_string(y) + " out of range for " +
                          std::to_string(k) + " classes");
    }
  }
  const Tensor<T> logp = log_softmax(z);
  T total = 0;
  for (std::size_t i = 0; i < n; ++i) total -= logp.at(i, static_cast<std::size_t>(labels[i]));
  const T loss = total / static_cast<T>(n);
  return make_op<T>("cross_entropy", Tensor<T>::scalar(loss), {&logits}, [&] {
    return [in = logits.node(), logp, labels, n, k](const Tensor<T>& g) {
      Tensor<T> dz({n, k});
      const T scale = g[0] / static_cast<T>(n);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
          const T p = std::exp(logp.at(i, j));
          dz.at(i, j) = scale * (p - (static_cast<int>(j) == labels[i] ? T(1) : T(0)));
        }
      }
      in->accumulate(std::move(dz));
    };
  });
}

template Var<float> cross_entropy(const Var<float>&, const std::vector<int>&);
template Var<double> cross_entropy(const Var<double>&, const std::vector<int>&);

void TrainConfig::validate() const {
  if (epochs < 1) throw ArgumentError("epochs must be >= 1");
  if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (t_max_epochs < 1) throw ArgumentError("t_max_epochs must be >= 1");
  if (!(eta_min >= 0 && eta_min <= lr0)) throw ArgumentError("need 0 <= eta_min <= lr0");
  if (!(ema_decay >= 0 && ema_decay < 1)) throw ArgumentError("ema_decay must lie in [0, 1)");
  if (!(momentum >= 0 && momentum < 1)) throw ArgumentError("momentum must lie in [0, 1)");
}

double cosine_lr(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw ArgumentError("cosine_lr: negative epoch");
  if (cfg.no_restart && epoch >= cfg.t_max_epochs) return cfg.eta_min;
  const int phase = epoch % cfg.t_max_epochs;
  return cfg.eta_min + 0.5 * (cfg.lr0 - cfg.eta_min) *
                           (1 + std::cos(std::numbers::pi * phase / cfg.t_max_epochs));
}

template <typename T>
void sgd_step(Tensor<T>& w, const Tensor<T>& g, Tensor<T>& v, double momentum, double lr) {
  if (w.shape() != g.shape() || w.shape() != v.shape()) {
    throw DimensionError("sgd_step: shapes " + shape_str(w.shape()) + ", " + shape_str(g.shape()) +
                         ", " + shape_str(v.shape()) + " disagree");
  }
  const T mu = static_cast<T>(momentum), eta = static_cast<T>(lr);
  for (std::size_t i = 0; i < w.numel(); ++i) {
    v[i] = mu * v[i] + g[i];
    w[i] -= eta * v[i];
  }
}

template <typename T>
void ema_update(Tensor<T>& shadow, const Tensor<T>& value, double decay) {
  if (shadow.shape() != value.shape()) {
    throw DimensionError("ema_update: shadow " + shape_str(shadow.shape()) + " vs " +
                         shape_str(value.shape()));
  }
  const T d = static_cast<T>(decay), r = static_cast<T>(1.0 - decay);
  for (std::size_t i = 0; i < shadow.numel(); ++i) shadow[i] = d * shadow[i] + r * value[i];
}

template void sgd_step(Tensor<float>&, const Tensor<float>&, Tensor<float>&, double, double);
template void sgd_step(Tensor<double>&, const Tensor<double>&, Tensor<double>&, double, double);
template void ema_update(Tensor<float>&, const Tensor<float>&, double);
template void ema_update(Tensor<double>&, const Tensor<double>&, double);

void Sgd::step(std::vector<std::pair<std::string, Var<float>>>& params, double lr) {
  if (velocity_.empty()) {
    for (auto& [name, p] : params) velocity_.emplace_back(p.shape(), 0.0f);
  }
  if (velocity_.size() != params.size()) throw DimensionError("Sgd: parameter list changed");
  for (std::size_t i = 0; i < params.size(); ++i) {
    Var<float>& p = params[i].second;
    if (!p.has_grad()) continue;  // no path to the loss: zero gradient, v still decays
    sgd_step(p.mutable_value(), p.grad(), velocity_[i], momentum_, lr);
  }
  lr_ = lr;
  ++steps_;
}

Ema::Ema(ResNetPlus<float>& model, double decay) : decay_(decay), shadow_(model.state_dict(true)) {}

void Ema::update(ResNetPlus<float>& model) {
  std::size_t i = 0;
  StateVisitor<float> v;
  v.parameter = [&](const std::string&, Var<float>& p) { ema_update(shadow_.at(i++).second, p.value(), decay_); };
  v.buffer = [&](const std::string&, Tensor<float>& b) { ema_update(shadow_.at(i++).second, b, decay_); };
  model.visit(v);
}

WeightSwap::WeightSwap(ResNetPlus<float>& model, const StateDict<float>& state)
    : model_(model), saved_(model.state_dict(true)) {
  model_.load_state(state);
}

WeightSwap::~WeightSwap() { model_.load_state(saved_); }

// --- report ----------------------------------------------------------------------------------

namespace {

std::string fmt(double v, int precision = 9) {
  std::ostringstream s;
  s << std::setprecision(precision) << v;
  return s.str();
}

}  // namespace

std::string TrainReport::to_csv() const {
  std::ostringstream s;
  s << "epoch,lr,train_loss,train_acc,val_acc\n";
  for (const auto& e : epochs) {
    s << e.epoch << "," << fmt(e.lr) << "," << fmt(e.train_loss) << ","
      << (e.train_acc < 0 ? std::string() : fmt(e.train_acc)) << "," << fmt(e.val_acc) << "\n";
  }
  return s.str();
}

std::string TrainReport::to_text() const {
  std::ostringstream s;
  s << "epochs = " << epochs.size() << "\n"
    << "steps = " << steps << "\n"
    << "skipped_batches = " << skipped_batches << "\n"
    << "best_val_acc = " << fmt(best_val_acc) << "\n"
    << "best_epoch = " << best_epoch << "\n"
    << "checkpoint = " << checkpoint_path << "\n\n"
    << " epoch          lr  train_loss  train_acc    val_acc\n";
  for (const auto& e : epochs) {
    s << std::setw(6) << e.epoch << std::setw(12) << std::scientific << std::setprecision(3) << e.lr
      << std::fixed << std::setprecision(5) << std::setw(12) << e.train_loss << std::setprecision(4)
      << std::setw(11) << e.train_acc << std::setw(11) << e.val_acc << (e.improved ? "  *" : "")
      << std::defaultfloat << "\n";
  }
  return s.str();
}

// --- training --------------------------------------------------------------------------------

Tensor<double> predict_proba(ResNetPlus<float>& model, const Tensor<float>& images) {
  Tape<float>::Pause pause;
  const Var<float> logits = model.forward(Var<float>(images), Mode::kEval);
  return softmax(logits.value().cast<double>());
}

double accuracy(ResNetPlus<float>& model, const Dataset& ds, const PreprocessOptions& prep,
                std::size_t batch_size) {
  if (ds.empty()) return 0.0;
  std::size_t correct = 0;
  BatchIter it(ds, batch_size, false, 0, 0, PreprocessMode::kEval, prep);
  while (auto b = it.next()) {
    const Tensor<double> p = predict_proba(model, b->images);
    for (std::size_t i = 0; i < b->labels.size(); ++i) {
      std::size_t best = 0;
      for (std::size_t j = 1; j < p.dim(1); ++j) {
        if (p.at(i, j) > p.at(i, best)) best = j;
      }
      correct += static_cast<int>(best) == b->labels[i];
    }
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

MetricsReport evaluate(ResNetPlus<float>& model, const Dataset& ds, const PreprocessOptions& prep,
                       const std::string& weights_label) {
  if (ds.empty()) throw ArgumentError("evaluate: dataset is empty");
  const std::size_t k = ds.num_classes();
  Tensor<double> probs({ds.size(), k});
  std::vector<double> millis;
  millis.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Batch b = make_batch(ds, {i}, PreprocessMode::kEval, prep, 0, 0);
    const auto t0 = std::chrono::steady_clock::now();
    const Tensor<double> p = predict_proba(model, b.images);
    const auto t1 = std::chrono::steady_clock::now();
    millis.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    if (p.dim(1) != k) {
      throw DimensionError("evaluate: model has " + std::to_string(p.dim(1)) + " outputs, dataset " +
                           std::to_string(k) + " classes");
    }
    for (std::size_t j = 0; j < k; ++j) probs.at(i, j) = p.at(0, j);
  }
  MetricsReport r = make_report(probs, ds.labels(), ds.class_names);
  r.weights = weights_label;
  r.latency = latency_stats(millis);
  return r;
}

double first_batch_loss(ResNetPlus<float>& model, const Dataset& ds, const TrainConfig& cfg,
                        const PreprocessOptions& prep) {
  BatchIter it(ds, cfg.batch_size, true, cfg.seed, 0, PreprocessMode::kTrain, prep);
  auto b = it.next();
  if (!b) throw ArgumentError("first_batch_loss: dataset is empty");
  Tape<float>::Pause pause;
  const Var<float> logits = model.forward(Var<float>(b->images), Mode::kTrain);
  return cross_entropy(logits, b->labels).value()[0];
}

TrainReport train(ResNetPlus<float>& model, const Dataset& train_set, const Dataset& val_set,
                  const TrainConfig& cfg, const PreprocessOptions& prep, const CheckpointMeta& meta,
                  const TrainHooks& hooks) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) throw ArgumentError("train: train and val splits must be nonempty");
  if (train_set.num_classes() != static_cast<std::size_t>(model.config().num_classes)) {
    throw DimensionError("train: dataset has " + std::to_string(train_set.num_classes()) +
                         " classes, model " + std::to_string(model.config().num_classes));
  }

  TrainReport report;
  report.checkpoint_path = cfg.checkpoint_path;
  auto params = model.parameters();
  Sgd opt(cfg.momentum);
  Ema ema(model, cfg.ema_decay);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = cosine_lr(epoch, cfg);
    double loss_sum = 0.0;
    std::size_t loss_count = 0;
    BatchIter it(train_set, cfg.batch_size, true, cfg.seed, static_cast<std::uint64_t>(epoch),
                 PreprocessMode::kTrain, prep);
    while (auto batch = it.next()) {
      if (batch->labels.size() < 2) {
        ++report.skipped_batches;
        continue;
      }
      for (auto& [name, p] : params) p.zero_grad();
      Tape<float> tape;
      Var<float> loss;
      {
        Tape<float>::Scope scope(tape);
        loss = cross_entropy(model.forward(Var<float>(batch->images), Mode::kTrain), batch->labels);
        const float value = loss.value()[0];
        if (!std::isfinite(value)) {
          throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                std::to_string(report.steps));
        }
        tape.backward(loss);
      }
      opt.step(params, lr);
      ema.update(model);
      ++report.steps;
      loss_sum += static_cast<double>(loss.value()[0]) * static_cast<double>(batch->labels.size());
      loss_count += batch->labels.size();
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_count ? loss_sum / static_cast<double>(loss_count) : 0.0;
    if (cfg.track_train_acc) rec.train_acc = accuracy(model, train_set, prep, cfg.batch_size);
    if (cfg.eval_with_ema) {
      WeightSwap swap(model, ema.shadow());
      rec.val_acc = accuracy(model, val_set, prep, cfg.batch_size);
    } else {
      rec.val_acc = accuracy(model, val_set, prep, cfg.batch_size);
    }
    if (rec.val_acc > report.best_val_acc) {
      rec.improved = true;
      report.best_val_acc = rec.val_acc;
      report.best_epoch = epoch;
      report.best_raw = model.state_dict(true);
      report.best_ema = ema.shadow();
      if (!cfg.checkpoint_path.empty()) {
        CheckpointMeta m = meta;
        m.best_val_acc = rec.val_acc;
        m.epoch = epoch;
        m.seed = cfg.seed;
        m.class_names = train_set.class_names;
        m.norm_mean = prep.norm.mean;
        m.norm_std = prep.norm.std;
        m.image_size = static_cast<int>(prep.image_size);
        save_checkpoint(cfg.checkpoint_path, model, &ema.shadow(), m);
      }
    }
    report.epochs.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(rec);
  }
  return report;
}

}  // namespace rnp
