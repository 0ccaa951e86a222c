#pragma once

// Checkpoint layout (little-endian):
//   "RNP1" | u32 header_length | header (JSON text) | f32 payloads in directory order
// The header echoes the model config and run metadata and lists each tensor as
// {name, dtype, shape, offset}; offsets are relative to the first payload byte.
// Tensor names are prefixed "param/", "buffer/" (batch-norm running statistics) or
// "ema/" (shadow copies of parameters and buffers).

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "resnetplus/model.hpp"

namespace rnp {

inline constexpr char kCheckpointMagic[4] = {'R', 'N', 'P', '1'};
inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
  double best_val_acc = 0.0;
  int epoch = -1;
  std::uint64_t seed = 0;
  std::vector<std::string> class_names;
  std::array<double, 3> norm_mean{0.5, 0.5, 0.5};
  std::array<double, 3> norm_std{0.25, 0.25, 0.25};
  int image_size = 224;
};

nlohmann::json to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const CheckpointMeta& meta);
CheckpointMeta checkpoint_meta_from_json(const nlohmann::json& j);

/// Writes raw weights, running statistics and (optionally) EMA shadows.
void save_checkpoint(const std::string& path, ResNetPlus<float>& model,
                     const StateDict<float>* ema, const CheckpointMeta& meta);

struct LoadedCheckpoint {
  ModelConfig config;
  CheckpointMeta meta;
  std::unique_ptr<ResNetPlus<float>> model;  // raw weights
  StateDict<float> ema;                       // empty when the file has no shadows
};

/// Reads a checkpoint and builds its model. With `config_override`, the model is built
/// from that config instead of the echoed one, so any shape disagreement surfaces as a
/// CheckpointMismatch naming the tensor. Throws FormatError on bad magic, version,
/// truncation or a malformed header; nothing is returned on failure.
LoadedCheckpoint load_checkpoint(const std::string& path,
                                 const std::optional<ModelConfig>& config_override = std::nullopt);

}  // namespace rnp
