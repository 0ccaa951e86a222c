#pragma once

#include <stdexcept>
#include <string>

namespace rnp {

/// Shapes that cannot be combined (mismatched channels, non-broadcastable, window too large).
class DimensionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value outside its documented domain (non-positive stride, label out of range, ...).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Batch statistics requested over fewer than two elements.
class DegenerateBatchError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed or truncated file (checkpoint, manifest, image).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Checkpoint tensor whose name or shape does not match the model being loaded.
class CheckpointMismatch : public FormatError {
 public:
  CheckpointMismatch(std::string tensor, const std::string& what)
      : FormatError(what), tensor_(std::move(tensor)) {}
  const std::string& tensor() const noexcept { return tensor_; }

 private:
  std::string tensor_;
};

/// Loss became NaN or Inf during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace rnp
