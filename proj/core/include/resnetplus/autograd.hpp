#pragma once

// Reverse-mode autodiff. Ops executed while a Tape is active append a record holding
// their adjoint; Tape::backward replays the records in exact reverse order. With no
// active tape, ops compute values only and keep no references to their inputs.

#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "resnetplus/errors.hpp"
#include "resnetplus/tensor.hpp"

namespace rnp {

template <typename T>
struct Node {
  Tensor<T> value;
  Tensor<T> grad;  // materialized on first accumulation
  bool requires_grad = false;
  const char* op = "leaf";
  std::function<void(const Tensor<T>& grad_out)> adjoint;

  void accumulate(const Tensor<T>& g) {
    if (g.shape() != value.shape()) {
      throw DimensionError(std::string("gradient shape ") + shape_str(g.shape()) +
                           " does not match value " + shape_str(value.shape()) + " in " + op);
    }
    if (grad.empty()) {
      grad = g;
      return;
    }
    for (std::size_t i = 0; i < grad.numel(); ++i) grad[i] += g[i];
  }
  void accumulate(Tensor<T>&& g) {
    if (grad.empty() && g.shape() == value.shape()) {
      grad = std::move(g);
      return;
    }
    accumulate(static_cast<const Tensor<T>&>(g));
  }
};

/// Shared handle to a value in the autodiff graph. Copies alias the same node.
template <typename T>
class Var {
 public:
  Var() = default;
  explicit Var(Tensor<T> value, bool requires_grad = false)
      : node_(std::make_shared<Node<T>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

  bool defined() const noexcept { return node_ != nullptr; }
  const Tensor<T>& value() const { return node_->value; }
  /// Direct write access; only valid for leaves (parameters, inputs) outside a forward pass.
  Tensor<T>& mutable_value() { return node_->value; }
  const Tensor<T>& grad() const { return node_->grad; }
  bool has_grad() const { return node_ && !node_->grad.empty(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }
  const Shape& shape() const { return node_->value.shape(); }
  void zero_grad() { node_->grad = Tensor<T>(); }
  const std::shared_ptr<Node<T>>& node() const noexcept { return node_; }

 private:
  std::shared_ptr<Node<T>> node_;
};

template <typename T>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Makes `tape` the recording tape of this thread for the scope's lifetime.
  class Scope {
   public:
    explicit Scope(Tape& tape) : prev_(current_) { current_ = &tape; }
    ~Scope() { current_ = prev_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    Tape* prev_;
  };

  /// Suspends recording (eval-mode forward inside a training step, probes, ...).
  class Pause {
   public:
    Pause() : prev_(current_) { current_ = nullptr; }
    ~Pause() { current_ = prev_; }
    Pause(const Pause&) = delete;
    Pause& operator=(const Pause&) = delete;

   private:
    Tape* prev_;
  };

  static Tape* current() noexcept { return current_; }

  void record(std::shared_ptr<Node<T>> node) { records_.push_back(std::move(node)); }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  void clear() { records_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and runs every recorded adjoint in reverse order.
  /// Gradients accumulate into every requires_grad node reachable from `loss`.
  void backward(const Var<T>& loss) {
    if (loss.value().numel() != 1) {
      throw ArgumentError("backward: loss must be scalar-shaped, got " + shape_str(loss.shape()));
    }
    if (records_.empty()) throw ArgumentError("backward: tape is empty");
    loss.node()->accumulate(Tensor<T>(loss.shape(), T(1)));
    for (auto it = records_.rbegin(); it != records_.rend(); ++it) {
      Node<T>& node = **it;
      if (node.grad.empty() || !node.adjoint) continue;
      node.adjoint(node.grad);
    }
  }

 private:
  static inline thread_local Tape* current_ = nullptr;
  std::vector<std::shared_ptr<Node<T>>> records_;
};

/// Builds the output Var of an op. When a tape is active and any input requires a
/// gradient, `make_adjoint()` is invoked to produce the backward closure and the
/// node is recorded; otherwise the result is a plain constant.
template <typename T, typename MakeAdjoint>
Var<T> make_op(const char* name, Tensor<T> value, std::initializer_list<const Var<T>*> inputs,
               MakeAdjoint&& make_adjoint) {
  auto node = std::make_shared<Node<T>>();
  node->value = std::move(value);
  node->op = name;
  Tape<T>* tape = Tape<T>::current();
  bool needs = false;
  for (const Var<T>* in : inputs) needs = needs || in->requires_grad();
  if (tape != nullptr && needs) {
    node->requires_grad = true;
    node->adjoint = make_adjoint();
    tape->record(node);
  }
  return Var<T>(std::move(node));
}

}  // namespace rnp
