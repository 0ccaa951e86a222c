#pragma once

// Run configuration: a line-oriented key = value file with [model], [train], [data] and
// [output] sections. Precedence is flag > file > default; the merged result is what
// resolved.cfg records.

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "resnetplus/model.hpp"
#include "resnetplus/trainer.hpp"

namespace rnp::cli {

struct DataSource {
  std::string manifest;         // path to a dataset manifest
  std::size_t synth_classes = 0;  // "KxN" synthetic corpus when nonzero
  std::size_t synth_train = 0;
  std::size_t image_size = 0;   // 0 = manifest value, or 32 for synthetic data

  bool synthetic() const { return synth_classes > 0; }
  bool empty() const { return manifest.empty() && !synthetic(); }
};

struct RunConfig {
  ModelConfig model;  // num_classes comes from the data
  TrainConfig train;
  DataSource data;
  std::string output_dir = "run";
};

/// "section.key" = value, applied in order.
using Overrides = std::vector<std::pair<std::string, std::string>>;

/// Defaults, then `path` (skipped when empty), then `flags`. Unknown keys, unparsable values
/// and a missing file throw ArgumentError; a file that is not key = value text throws FormatError.
RunConfig resolve_config(const std::string& path, const Overrides& flags);

/// Canonical text form with every key present; resolve_config(to_ini(c)) reproduces c.
std::string to_ini(const RunConfig& cfg);
void write_resolved(const RunConfig& cfg, const std::string& dir);

/// "3x60" -> {3, 60}.
std::pair<std::size_t, std::size_t> parse_synthetic(const std::string& s);

/// Overrides for a named architecture: resnet50, resnet50plus, resnet101, resnet101plus.
Overrides preset_overrides(const std::string& name);

/// Overrides setting the four ablation flags; replace_maxpool follows replace_stem so that the
/// all-off combination is the plain ResNet.
Overrides ablation_overrides(bool cbam, bool sco, bool replace_stem, bool modify_shortcut);

}  // namespace rnp::cli
