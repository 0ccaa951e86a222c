#include "run_config.hpp"

#include <charconv>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "resnetplus/errors.hpp"

namespace rnp::cli {
namespace {

namespace pt = boost::property_tree;

std::string fmt(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

bool parse_bool(const std::string& s) {
  const std::string v = boost::to_lower_copy(s);
  if (v == "true" || v == "on" || v == "yes" || v == "1") return true;
  if (v == "false" || v == "off" || v == "no" || v == "0") return false;
  throw ArgumentError("expected a boolean, got '" + s + "'");
}

template <typename Int>
Int parse_int(const std::string& s) {
  Int v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ArgumentError("expected an integer, got '" + s + "'");
  }
  return v;
}

double parse_double(const std::string& s) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ArgumentError("expected a number, got '" + s + "'");
  }
  return v;
}

std::string join_plan(const std::vector<int>& plan) {
  std::string out;
  for (std::size_t i = 0; i < plan.size(); ++i) out += (i ? "," : "") + std::to_string(plan[i]);
  return out;
}

std::vector<int> parse_plan(const std::string& s) {
  std::vector<int> plan;
  if (boost::trim_copy(s).empty()) return plan;
  std::vector<std::string> parts;
  boost::split(parts, s, boost::is_any_of(","));
  for (auto& p : parts) plan.push_back(parse_int<int>(boost::trim_copy(p)));
  return plan;
}

struct Key {
  const char* section;
  const char* name;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

#define RNP_BOOL(sec, key, field)                                           \
  Key {                                                                     \
    sec, key, [](const RunConfig& c) { return fmt(c.field); },              \
        [](RunConfig& c, const std::string& v) { c.field = parse_bool(v); } \
  }
#define RNP_REAL(sec, key, field)                                             \
  Key {                                                                       \
    sec, key, [](const RunConfig& c) { return fmt(c.field); },                \
        [](RunConfig& c, const std::string& v) { c.field = parse_double(v); } \
  }
#define RNP_INT(sec, key, field, type)                                            \
  Key {                                                                           \
    sec, key, [](const RunConfig& c) { return std::to_string(c.field); },         \
        [](RunConfig& c, const std::string& v) { c.field = parse_int<type>(v); } \
  }

const std::vector<Key>& keys() {
  static const std::vector<Key> table = {
      RNP_INT("model", "depth", model.depth, int),
      Key{"model", "stage_plan", [](const RunConfig& c) { return join_plan(c.model.stage_plan); },
          [](RunConfig& c, const std::string& v) { c.model.stage_plan = parse_plan(v); }},
      RNP_REAL("model", "width", model.width_mult),
      RNP_BOOL("model", "cbam", model.cbam),
      RNP_BOOL("model", "sco", model.sco),
      RNP_BOOL("model", "replace_stem", model.replace_stem),
      RNP_BOOL("model", "modify_shortcut", model.modify_shortcut),
      RNP_BOOL("model", "replace_maxpool", model.replace_maxpool),
      RNP_BOOL("model", "sco_literal", model.sco_literal),
      RNP_BOOL("model", "shortcut_relu", model.shortcut_relu),
      RNP_INT("model", "cbam_ratio", model.cbam_ratio, int),
      RNP_INT("model", "spatial_kernel", model.spatial_kernel, int),
      RNP_REAL("model", "dropout", model.dropout_rate),

      RNP_REAL("train", "lr", train.lr0),
      RNP_INT("train", "t_max", train.t_max_epochs, int),
      RNP_REAL("train", "eta_min", train.eta_min),
      RNP_REAL("train", "momentum", train.momentum),
      RNP_INT("train", "batch_size", train.batch_size, std::size_t),
      RNP_INT("train", "epochs", train.epochs, int),
      RNP_REAL("train", "ema_decay", train.ema_decay),
      RNP_INT("train", "seed", train.seed, std::uint64_t),
      RNP_BOOL("train", "eval_with_ema", train.eval_with_ema),
      RNP_BOOL("train", "no_restart", train.no_restart),
      RNP_BOOL("train", "track_train_acc", train.track_train_acc),

      Key{"data", "manifest", [](const RunConfig& c) { return c.data.manifest; },
          [](RunConfig& c, const std::string& v) { c.data.manifest = v; }},
      Key{"data", "synthetic",
          [](const RunConfig& c) {
            return c.data.synthetic()
                       ? std::to_string(c.data.synth_classes) + "x" + std::to_string(c.data.synth_train)
                       : std::string();
          },
          [](RunConfig& c, const std::string& v) {
            if (boost::trim_copy(v).empty()) {
              c.data.synth_classes = c.data.synth_train = 0;
            } else {
              std::tie(c.data.synth_classes, c.data.synth_train) = parse_synthetic(v);
            }
          }},
      RNP_INT("data", "image_size", data.image_size, std::size_t),

      Key{"output", "dir", [](const RunConfig& c) { return c.output_dir; },
          [](RunConfig& c, const std::string& v) { c.output_dir = v; }},
  };
  return table;
}

#undef RNP_BOOL
#undef RNP_REAL
#undef RNP_INT

void apply(RunConfig& cfg, const std::string& section, const std::string& name,
           const std::string& value, const std::string& origin) {
  for (const auto& k : keys()) {
    if (section == k.section && name == k.name) {
      try {
        k.set(cfg, boost::trim_copy(value));
      } catch (const ArgumentError& e) {
        throw ArgumentError(origin + ": " + section + "." + name + ": " + e.what());
      }
      return;
    }
  }
  throw ArgumentError(origin + ": unknown key '" + section + "." + name + "'");
}

}  // namespace

std::pair<std::size_t, std::size_t> parse_synthetic(const std::string& s) {
  const auto x = s.find('x');
  if (x == std::string::npos) throw ArgumentError("synthetic spec must look like KxN, got '" + s + "'");
  const auto k = parse_int<std::size_t>(s.substr(0, x));
  const auto n = parse_int<std::size_t>(s.substr(x + 1));
  if (k < 2 || n < k) throw ArgumentError("synthetic spec needs K >= 2 and N >= K, got '" + s + "'");
  return {k, n};
}

RunConfig resolve_config(const std::string& path, const Overrides& flags) {
  RunConfig cfg;
  if (!path.empty()) {
    if (!std::filesystem::is_regular_file(path)) throw ArgumentError("config file not found: " + path);
    pt::ptree tree;
    try {
      pt::read_ini(path, tree);
    } catch (const pt::ini_parser_error& e) {
      throw FormatError("cannot parse config: " + std::string(e.what()));
    }
    for (const auto& [section, body] : tree) {
      if (body.empty() && !body.data().empty()) {
        throw ArgumentError(path + ": key '" + section + "' outside any section");
      }
      for (const auto& [name, value] : body) apply(cfg, section, name, value.data(), path);
    }
  }
  for (const auto& [dotted, value] : flags) {
    const auto dot = dotted.find('.');
    if (dot == std::string::npos) throw ArgumentError("override must be section.key=value, got '" + dotted + "'");
    apply(cfg, dotted.substr(0, dot), dotted.substr(dot + 1), value, "command line");
  }
  return cfg;
}

std::string to_ini(const RunConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const auto& k : keys()) {
    if (section != k.section) {
      if (!section.empty()) out << "\n";
      section = k.section;
      out << "[" << section << "]\n";
    }
    out << k.name << " = " << k.get(cfg) << "\n";
  }
  return out.str();
}

void write_resolved(const RunConfig& cfg, const std::string& dir) {
  std::filesystem::create_directories(dir);
  const auto path = (std::filesystem::path(dir) / "resolved.cfg").string();
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write " + path);
  out << to_ini(cfg);
}

Overrides preset_overrides(const std::string& name) {
  const bool plus = boost::ends_with(name, "plus");
  const std::string base = plus ? name.substr(0, name.size() - 4) : name;
  std::string depth;
  if (base == "resnet50") {
    depth = "50";
  } else if (base == "resnet101") {
    depth = "101";
  } else {
    throw ArgumentError("unknown model '" + name +
                        "' (resnet50, resnet50plus, resnet101, resnet101plus)");
  }
  const std::string on = fmt(plus);
  return {{"model.depth", depth},          {"model.cbam", on},
          {"model.sco", on},               {"model.replace_stem", on},
          {"model.modify_shortcut", on},   {"model.replace_maxpool", on}};
}

Overrides ablation_overrides(bool cbam, bool sco, bool replace_stem, bool modify_shortcut) {
  return {{"model.cbam", fmt(cbam)},
          {"model.sco", fmt(sco)},
          {"model.replace_stem", fmt(replace_stem)},
          {"model.replace_maxpool", fmt(replace_stem)},
          {"model.modify_shortcut", fmt(modify_shortcut)}};
}

}  // namespace rnp::cli
