#include "resnetplus/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

namespace rnp {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are written as native little-endian floats");

using nlohmann::json;

json to_json(const ModelConfig& c) {
  return json{{"depth", c.depth},
              {"stage_plan", c.resolved_stage_plan()},
              {"num_classes", c.num_classes},
              {"width_mult", c.width_mult},
              {"cbam", c.cbam},
              {"sco", c.sco},
              {"replace_stem", c.replace_stem},
              {"modify_shortcut", c.modify_shortcut},
              {"replace_maxpool", c.replace_maxpool},
              {"sco_literal", c.sco_literal},
              {"shortcut_relu", c.shortcut_relu},
              {"cbam_ratio", c.cbam_ratio},
              {"spatial_kernel", c.spatial_kernel},
              {"dropout_rate", c.dropout_rate}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.depth = j.at("depth").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.width_mult = j.at("width_mult").get<double>();
  c.cbam = j.at("cbam").get<bool>();
  c.sco = j.at("sco").get<bool>();
  c.replace_stem = j.at("replace_stem").get<bool>();
  c.modify_shortcut = j.at("modify_shortcut").get<bool>();
  c.replace_maxpool = j.at("replace_maxpool").get<bool>();
  c.sco_literal = j.value("sco_literal", false);
  c.shortcut_relu = j.value("shortcut_relu", false);
  c.cbam_ratio = j.at("cbam_ratio").get<int>();
  c.spatial_kernel = j.at("spatial_kernel").get<int>();
  c.dropout_rate = j.at("dropout_rate").get<double>();
  return c;
}

json to_json(const CheckpointMeta& m) {
  return json{{"best_val_acc", m.best_val_acc}, {"epoch", m.epoch},
              {"seed", m.seed},                 {"class_names", m.class_names},
              {"norm_mean", m.norm_mean},       {"norm_std", m.norm_std},
              {"image_size", m.image_size}};
}

CheckpointMeta checkpoint_meta_from_json(const json& j) {
  CheckpointMeta m;
  m.best_val_acc = j.at("best_val_acc").get<double>();
  m.epoch = j.at("epoch").get<int>();
  m.seed = j.value("seed", std::uint64_t{0});
  m.class_names = j.at("class_names").get<std::vector<std::string>>();
  m.norm_mean = j.at("norm_mean").get<std::array<double, 3>>();
  m.norm_std = j.at("norm_std").get<std::array<double, 3>>();
  m.image_size = j.at("image_size").get<int>();
  return m;
}

void save_checkpoint(const std::string& path, ResNetPlus<float>& model,
                     const StateDict<float>* ema, const CheckpointMeta& meta) {
  std::vector<std::pair<std::string, const Tensor<float>*>> entries;
  StateDict<float> params = model.state_dict(false);
  StateDict<float> buffers;
  {
    StateVisitor<float> v;
    v.buffer = [&](const std::string& name, Tensor<float>& b) { buffers.emplace_back(name, b); };
    model.visit(v);
  }
  for (const auto& [n, t] : params) entries.emplace_back("param/" + n, &t);
  for (const auto& [n, t] : buffers) entries.emplace_back("buffer/" + n, &t);
  if (ema) {
    for (const auto& [n, t] : *ema) entries.emplace_back("ema/" + n, &t);
  }

  json dir = json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : entries) {
    dir.push_back({{"name", name}, {"dtype", "f32"}, {"shape", t->shape()}, {"offset", offset}});
    offset += t->numel() * sizeof(float);
  }
  const json header{{"format", "RNP1"},
                    {"version", kCheckpointVersion},
                    {"config", to_json(model.config())},
                    {"meta", to_json(meta)},
                    {"payload_bytes", offset},
                    {"tensors", dir}};
  const std::string text = header.dump(1);
  const auto len = static_cast<std::uint32_t>(text.size());

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot open checkpoint for writing: " + path);
  out.write(kCheckpointMagic, 4);
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : entries) {
    out.write(reinterpret_cast<const char*>(t->ptr()),
              static_cast<std::streamsize>(t->numel() * sizeof(float)));
  }
  if (!out) throw FormatError("failed writing checkpoint: " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path,
                                 const std::optional<ModelConfig>& config_override) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint: " + path);
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) {
    throw FormatError("not a checkpoint (bad magic): " + path);
  }
  std::uint32_t len = 0;
  std::memcpy(&len, bytes.data() + 4, sizeof(len));
  if (bytes.size() < 8ull + len) throw FormatError("truncated checkpoint header: " + path);

  json header;
  try {
    header = json::parse(bytes.begin() + 8, bytes.begin() + 8 + len);
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  }
  LoadedCheckpoint result;
  std::vector<std::tuple<std::string, Shape, std::uint64_t>> dir;
  try {
    const int version = header.at("version").get<int>();
    if (version != kCheckpointVersion) {
      throw FormatError("unsupported checkpoint version " + std::to_string(version));
    }
    result.config = model_config_from_json(header.at("config"));
    result.meta = checkpoint_meta_from_json(header.at("meta"));
    for (const auto& e : header.at("tensors")) {
      if (e.at("dtype").get<std::string>() != "f32") {
        throw FormatError("unsupported dtype for " + e.at("name").get<std::string>());
      }
      dir.emplace_back(e.at("name").get<std::string>(), e.at("shape").get<Shape>(),
                       e.at("offset").get<std::uint64_t>());
    }
  } catch (const json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  }

  const std::size_t payload = 8ull + len;
  StateDict<float> raw;
  for (const auto& [name, shape, offset] : dir) {
    if (shape.empty()) throw FormatError("tensor '" + name + "' has empty shape");
    const std::size_t nbytes = shape_numel(shape) * sizeof(float);
    if (payload + offset + nbytes > bytes.size()) {
      throw FormatError("truncated checkpoint: payload of '" + name + "' is incomplete");
    }
    Tensor<float> t(shape);
    std::memcpy(t.ptr(), bytes.data() + payload + offset, nbytes);
    if (name.rfind("param/", 0) == 0) {
      raw.emplace_back(name.substr(6), std::move(t));
    } else if (name.rfind("buffer/", 0) == 0) {
      raw.emplace_back(name.substr(7), std::move(t));
    } else if (name.rfind("ema/", 0) == 0) {
      result.ema.emplace_back(name.substr(4), std::move(t));
    } else {
      throw FormatError("unknown tensor group in '" + name + "'");
    }
  }

  if (config_override) result.config = *config_override;
  auto model = std::make_unique<ResNetPlus<float>>(result.config, result.meta.seed);
  model->load_state(raw);
  if (!result.ema.empty()) {
    // Validate shadow shapes against the model as well.
    auto reference = model->state_dict(true);
    std::map<std::string, const Tensor<float>*> by_name;
    for (const auto& [n, t] : reference) by_name[n] = &t;
    for (const auto& [n, t] : result.ema) {
      auto it = by_name.find(n);
      if (it == by_name.end()) throw CheckpointMismatch("ema/" + n, "unexpected tensor 'ema/" + n + "'");
      if (it->second->shape() != t.shape()) {
        throw CheckpointMismatch("ema/" + n, "shape mismatch for tensor 'ema/" + n + "'");
      }
    }
  }
  result.model = std::move(model);
  return result;
}

}  // namespace rnp
