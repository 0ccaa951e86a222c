#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#if __has_include(<CLI11.hpp>)
#include <CLI11.hpp>
#else
#include <CLI/CLI.hpp>
#endif
#include <boost/algorithm/string.hpp>

#include "resnetplus/checkpoint.hpp"
#include "resnetplus/data.hpp"
#include "resnetplus/errors.hpp"
#include "resnetplus/gradcheck.hpp"
#include "resnetplus/image.hpp"
#include "resnetplus/metrics.hpp"
#include "resnetplus/model.hpp"
#include "resnetplus/trainer.hpp"
#include "run_config.hpp"

namespace rnp::cli {
namespace {

namespace fs = std::filesystem;

/// Raised for missing or contradictory command-line input detected after parsing.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::string pct(double v) {
  std::ostringstream s;
  s << std::fixed << std::setprecision(2) << 100.0 * v;
  return s.str();
}

// --- shared run options -------------------------------------------------------------------

struct RunFlags {
  std::string config;
  std::string model;
  std::string synthetic;
  std::string manifest;
  std::string out;
  std::optional<double> width;
  std::optional<double> lr;
  std::optional<int> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> image_size;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> sets;

  void attach(CLI::App& cmd, bool config_required) {
    auto* c = cmd.add_option("--config", config, "Run configuration file")->check(CLI::ExistingFile);
    if (config_required) c->required();
    cmd.add_option("--model", model, "resnet50, resnet50plus, resnet101 or resnet101plus");
    cmd.add_option("--synthetic", synthetic, "Synthetic stripes corpus KxN (K classes, N train images)");
    cmd.add_option("--manifest", manifest, "Dataset manifest");
    cmd.add_option("--out", out, "Output directory");
    cmd.add_option("--width", width, "Channel width multiplier");
    cmd.add_option("--lr", lr, "Initial learning rate");
    cmd.add_option("--epochs", epochs, "Training epochs");
    cmd.add_option("--batch-size", batch_size, "Mini-batch size");
    cmd.add_option("--image-size", image_size, "Input side length");
    cmd.add_option("--seed", seed, "Seed for data, initialization and shuffling");
    cmd.add_option("--set", sets, "Override any key: section.key=value (repeatable)");
  }

  Overrides overrides() const {
    Overrides o;
    if (!model.empty()) o = preset_overrides(model);
    if (!synthetic.empty()) {
      o.emplace_back("data.synthetic", synthetic);
      o.emplace_back("data.manifest", "");
    }
    if (!manifest.empty()) {
      o.emplace_back("data.manifest", manifest);
      o.emplace_back("data.synthetic", "");
    }
    if (!out.empty()) o.emplace_back("output.dir", out);
    auto num = [](double v) {
      std::ostringstream s;
      s << std::setprecision(17) << v;
      return s.str();
    };
    if (width) o.emplace_back("model.width", num(*width));
    if (lr) o.emplace_back("train.lr", num(*lr));
    if (epochs) o.emplace_back("train.epochs", std::to_string(*epochs));
    if (batch_size) o.emplace_back("train.batch_size", std::to_string(*batch_size));
    if (image_size) o.emplace_back("data.image_size", std::to_string(*image_size));
    if (seed) o.emplace_back("train.seed", std::to_string(*seed));
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects section.key=value, got '" + s + "'");
      o.emplace_back(boost::trim_copy(s.substr(0, eq)), s.substr(eq + 1));
    }
    return o;
  }

  RunConfig resolve() const { return resolve_config(config, overrides()); }
};

// --- data ---------------------------------------------------------------------------------

struct RunData {
  DataSplits splits;
  PreprocessOptions prep;
};

void report_warnings(const Dataset& ds, std::ostream& err) {
  for (const auto& w : ds.warnings) err << "warning: " << w << "\n";
  if (!ds.skipped.empty()) {
    err << "warning: skipped " << ds.skipped.size() << " unreadable file(s) in " << to_string(ds.split)
        << "\n";
  }
}

RunData load_data(const RunConfig& cfg, std::ostream& err) {
  RunData d;
  if (cfg.data.synthetic()) {
    const std::size_t size = cfg.data.image_size ? cfg.data.image_size : 32;
    d.splits = synth_splits(cfg.data.synth_classes, cfg.data.synth_train, size, cfg.train.seed);
    d.prep.image_size = size;
    d.prep.policy = AugmentPolicy::synthetic();
    return d;
  }
  if (!fs::is_regular_file(cfg.data.manifest)) throw UsageError("manifest not found: " + cfg.data.manifest);
  const Manifest m = read_manifest(cfg.data.manifest);
  d.splits = load_splits(m);
  d.prep.image_size = cfg.data.image_size ? cfg.data.image_size : m.image_size;
  d.prep.norm = m.norm;
  d.prep.policy = m.policy;
  for (const Dataset* ds : {&d.splits.train, &d.splits.val, &d.splits.test}) report_warnings(*ds, err);
  return d;
}

void write_skip_reports(const RunData& d, const std::string& dir) {
  for (const Dataset* ds : {&d.splits.train, &d.splits.val, &d.splits.test}) {
    if (!ds->skipped.empty()) {
      write_skip_report((fs::path(dir) / ("skipped_" + to_string(ds->split) + ".txt")).string(), *ds);
    }
  }
}

void require_data(const RunConfig& cfg, const std::string& command) {
  if (cfg.data.empty()) {
    throw UsageError(command + ": no data source (set [data] manifest or synthetic, or pass "
                               "--manifest / --synthetic)");
  }
}

// --- train --------------------------------------------------------------------------------

struct TrainOutcome {
  TrainReport report;
  std::string checkpoint;
  std::size_t num_classes = 0;
  std::size_t params = 0;
};

TrainOutcome train_run(RunConfig cfg, const RunData& data, std::ostream& out, bool verbose) {
  const std::string dir = cfg.output_dir;
  fs::create_directories(dir);
  write_skip_reports(data, dir);
  if (data.splits.train.empty()) throw FormatError("training split is empty");
  if (data.splits.val.empty()) throw FormatError("validation split is empty");

  cfg.model.num_classes = static_cast<int>(data.splits.train.num_classes());
  cfg.model.validate();
  ResNetPlus<float> model(cfg.model, cfg.train.seed);

  TrainConfig tc = cfg.train;
  tc.checkpoint_path = (fs::path(dir) / "best.ckpt").string();
  TrainHooks hooks;
  if (verbose) {
    hooks.on_epoch = [&out](const EpochRecord& r) {
      out << "epoch " << std::setw(3) << r.epoch << "  lr " << std::scientific << std::setprecision(3)
          << r.lr << std::defaultfloat << "  loss " << std::fixed << std::setprecision(4)
          << r.train_loss << std::defaultfloat;
      if (r.train_acc >= 0) out << "  train " << pct(r.train_acc) << "%";
      out << "  val " << pct(r.val_acc) << "%" << (r.improved ? "  *" : "") << "\n";
    };
  }
  TrainOutcome o;
  o.params = model.param_count();
  o.num_classes = data.splits.train.num_classes();
  o.report = train(model, data.splits.train, data.splits.val, tc, data.prep, {}, hooks);
  o.checkpoint = tc.checkpoint_path;

  std::ofstream((fs::path(dir) / "train_report.csv").string()) << o.report.to_csv();
  std::ofstream((fs::path(dir) / "train_report.txt").string()) << o.report.to_text();
  return o;
}

int cmd_train(const RunFlags& flags, std::ostream& out, std::ostream& err) {
  const RunConfig cfg = flags.resolve();
  require_data(cfg, "train");
  write_resolved(cfg, cfg.output_dir);
  const RunData data = load_data(cfg, err);
  const TrainOutcome o = train_run(cfg, data, out, true);
  const auto& last = o.report.epochs.back();
  out << cfg.model.label() << ": " << o.params << " parameters\n";
  if (last.train_acc >= 0) out << "final train acc " << pct(last.train_acc) << "%\n";
  out << "best val acc " << pct(o.report.best_val_acc) << "% at epoch " << o.report.best_epoch << "\n";
  out << "checkpoint " << o.checkpoint << "\n";
  return kExitOk;
}

// --- eval ---------------------------------------------------------------------------------

struct EvalFlags {
  std::string checkpoint;
  std::string split = "test";
  std::string weights = "ema";
  std::string formats = "json,csv,svg";
};

unsigned parse_formats(const std::string& list) {
  std::vector<std::string> parts;
  boost::split(parts, list, boost::is_any_of(","));
  unsigned f = 0;
  for (auto& p : parts) {
    boost::trim(p);
    if (p == "json") {
      f |= kExportJson;
    } else if (p == "csv") {
      f |= kExportCsv;
    } else if (p == "svg") {
      f |= kExportSvg;
    } else {
      throw UsageError("unknown report format '" + p + "' (json, csv, svg)");
    }
  }
  return f;
}

/// Loads the checkpoint and installs the requested weights. With a config file, its model
/// section is authoritative and any disagreement with the stored tensors is an error.
LoadedCheckpoint open_checkpoint(const std::string& path, const std::string& weights,
                                 const std::optional<RunConfig>& cfg) {
  if (weights != "raw" && weights != "ema") throw UsageError("--weights must be raw or ema");
  std::optional<ModelConfig> override_cfg;
  if (cfg) {
    // Class count is not part of the run config; take it from the checkpoint header.
    LoadedCheckpoint probe = load_checkpoint(path);
    ModelConfig m = cfg->model;
    m.num_classes = probe.config.num_classes;
    override_cfg = m;
  }
  LoadedCheckpoint ck = load_checkpoint(path, override_cfg);
  if (weights == "ema") {
    if (ck.ema.empty()) throw FormatError("checkpoint has no EMA weights: " + path);
    ck.model->load_state(ck.ema);
  }
  return ck;
}

PreprocessOptions checkpoint_prep(const CheckpointMeta& meta) {
  PreprocessOptions p;
  p.image_size = static_cast<std::size_t>(meta.image_size);
  p.norm.mean = meta.norm_mean;
  p.norm.std = meta.norm_std;
  p.policy = AugmentPolicy::none();
  return p;
}

Dataset eval_split(const RunConfig& cfg, const CheckpointMeta& meta, Split split, std::ostream& err) {
  Dataset ds;
  if (cfg.data.synthetic()) {
    DataSplits s = synth_splits(cfg.data.synth_classes, cfg.data.synth_train,
                                static_cast<std::size_t>(meta.image_size), cfg.train.seed);
    ds = split == Split::kTrain ? s.train : split == Split::kVal ? s.val : s.test;
  } else {
    if (!fs::is_regular_file(cfg.data.manifest)) throw UsageError("manifest not found: " + cfg.data.manifest);
    const Manifest m = read_manifest(cfg.data.manifest);
    ds = load_split(m.root, split, meta.class_names);
    report_warnings(ds, err);
  }
  if (ds.class_names != meta.class_names) {
    throw FormatError("dataset classes do not match the checkpoint's (" +
                      boost::join(meta.class_names, ",") + ")");
  }
  if (ds.empty()) throw FormatError("split '" + to_string(split) + "' has no images");
  return ds;
}

int cmd_eval(const RunFlags& flags, const EvalFlags& ef, std::ostream& out, std::ostream& err) {
  RunConfig cfg = flags.resolve();
  require_data(cfg, "eval");
  const unsigned formats = parse_formats(ef.formats);
  const Split split = parse_split(ef.split);
  // The config's output directory belongs to the training run.
  if (flags.out.empty()) cfg.output_dir = (fs::path(ef.checkpoint).parent_path() / "eval").string();

  // Everything that can fail on bad input happens before the first file is written.
  const bool has_model_config = !flags.config.empty() || !flags.model.empty() || flags.width;
  LoadedCheckpoint ck =
      open_checkpoint(ef.checkpoint, ef.weights, has_model_config ? std::optional(cfg) : std::nullopt);
  const Dataset ds = eval_split(cfg, ck.meta, split, err);
  const MetricsReport report = evaluate(*ck.model, ds, checkpoint_prep(ck.meta), ef.weights);

  write_resolved(cfg, cfg.output_dir);
  const auto files = export_report(report, cfg.output_dir, formats, "metrics_" + ef.weights);
  out << ck.config.label() << " [" << ef.weights << "] on " << to_string(split) << " (" << ds.size()
      << " images)\n";
  out << summary_line(report) << "\n";
  out << "latency " << std::fixed << std::setprecision(3) << report.latency.mean_ms << " +- "
      << report.latency.std_ms << " ms/image" << std::defaultfloat << "\n";
  for (const auto& f : files) out << "wrote " << f << "\n";
  return kExitOk;
}

// --- ablate -------------------------------------------------------------------------------

struct AblationRow {
  bool cbam, sco, rc, ms;
};

std::vector<AblationRow> ablation_grid() {
  std::vector<AblationRow> rows;
  for (int bits = 15; bits >= 0; --bits) {
    rows.push_back({(bits & 8) != 0, (bits & 4) != 0, (bits & 2) != 0, (bits & 1) != 0});
  }
  return rows;
}

std::string mark(bool on) { return on ? "✔" : "✘"; }

std::string row_label(const AblationRow& r) {
  return std::string("cbam") + (r.cbam ? "1" : "0") + "_sco" + (r.sco ? "1" : "0") + "_rc" +
         (r.rc ? "1" : "0") + "_ms" + (r.ms ? "1" : "0");
}

int cmd_ablate(const RunFlags& flags, bool dry_run, std::ostream& out, std::ostream& err) {
  const Overrides base = flags.overrides();
  const RunConfig base_cfg = resolve_config(flags.config, base);
  require_data(base_cfg, "ablate");

  std::vector<RunConfig> configs;
  const auto grid = ablation_grid();
  for (const auto& r : grid) {
    Overrides o = base;
    for (auto& kv : ablation_overrides(r.cbam, r.sco, r.rc, r.ms)) o.push_back(kv);
    o.emplace_back("output.dir", (fs::path(base_cfg.output_dir) / row_label(r)).string());
    configs.push_back(resolve_config(flags.config, o));
  }

  if (dry_run) {
    for (std::size_t i = 0; i < grid.size(); ++i) {
      out << "; run " << std::setw(2) << std::setfill('0') << i + 1 << std::setfill(' ') << ": "
          << row_label(grid[i]) << "\n"
          << to_ini(configs[i]) << "\n";
    }
    return kExitOk;
  }

  fs::create_directories(base_cfg.output_dir);
  write_resolved(base_cfg, base_cfg.output_dir);
  const RunData data = load_data(base_cfg, err);

  std::ofstream csv((fs::path(base_cfg.output_dir) / "ablation.csv").string());
  csv << "cbam,sco,replace_stem,modify_shortcut,params,best_val_acc,test_acc\n";
  out << "CBAM  SCO  RC  MS  |  params    val%    test%\n";
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& r = grid[i];
    write_resolved(configs[i], configs[i].output_dir);
    const TrainOutcome o = train_run(configs[i], data, out, false);
    LoadedCheckpoint ck = open_checkpoint(o.checkpoint, configs[i].train.eval_with_ema ? "ema" : "raw",
                                          std::nullopt);
    const double test_acc = accuracy(*ck.model, data.splits.test, checkpoint_prep(ck.meta));
    out << " " << mark(r.cbam) << "     " << mark(r.sco) << "    " << mark(r.rc) << "   " << mark(r.ms)
        << "   | " << std::setw(8) << o.params << "  " << std::setw(6) << pct(o.report.best_val_acc)
        << "  " << std::setw(6) << pct(test_acc) << std::endl;
    csv << r.cbam << "," << r.sco << "," << r.rc << "," << r.ms << "," << o.params << ","
        << std::setprecision(9) << o.report.best_val_acc << "," << test_acc << "\n";
  }
  return kExitOk;
}

// --- predict ------------------------------------------------------------------------------

int cmd_predict(const std::string& checkpoint, const std::string& weights,
                const std::vector<std::string>& files, std::ostream& out, std::ostream& err) {
  LoadedCheckpoint ck = open_checkpoint(checkpoint, weights, std::nullopt);
  const PreprocessOptions prep = checkpoint_prep(ck.meta);
  std::vector<double> millis;
  std::size_t ok = 0;
  std::mt19937_64 unused_rng(0);
  for (const auto& path : files) {
    try {
      const Image img = decode_image(path);
      const Tensor<float> x = preprocess(img, PreprocessMode::kEval, prep, unused_rng, path);
      const Tensor<float> batch = x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
      const auto t0 = std::chrono::steady_clock::now();
      const Tensor<double> p = predict_proba(*ck.model, batch);
      millis.push_back(
          std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count());
      std::size_t best = 0;
      for (std::size_t k = 1; k < p.dim(1); ++k) {
        if (p.at(0, k) > p.at(0, best)) best = k;
      }
      out << path << "\t" << ck.meta.class_names.at(best);
      for (std::size_t k = 0; k < p.dim(1); ++k) {
        out << "\t" << ck.meta.class_names.at(k) << "=" << std::fixed << std::setprecision(6)
            << p.at(0, k) << std::defaultfloat;
      }
      out << "\n";
      ++ok;
    } catch (const std::exception& e) {
      err << "error: " << path << ": " << e.what() << "\n";
    }
  }
  if (!millis.empty()) {
    const LatencyStats s = latency_stats(millis);
    out << "latency " << std::fixed << std::setprecision(3) << s.mean_ms << " +- " << s.std_ms
        << " ms/image over " << s.samples << " image(s)" << std::defaultfloat << "\n";
  }
  return ok > 0 ? kExitOk : kExitData;
}

// --- synth --------------------------------------------------------------------------------

int cmd_synth(const std::string& dir, const std::string& spec, std::size_t size, std::uint64_t seed,
              std::ostream& out) {
  const auto [k, n] = parse_synthetic(spec);
  const DataSplits splits = synth_splits(k, n, size, seed);
  write_dataset_tree(dir, splits);
  Manifest m = build_manifest(dir, size);
  m.root = ".";
  m.policy = AugmentPolicy::synthetic();
  const std::string manifest = (fs::path(dir) / "manifest.cfg").string();
  write_manifest(manifest, m);
  out << "wrote " << splits.train.size() << "/" << splits.val.size() << "/" << splits.test.size()
      << " train/val/test images to " << dir << "\n";
  out << "manifest " << manifest << "\n";
  return kExitOk;
}

// --- gradcheck ----------------------------------------------------------------------------

int cmd_gradcheck(const std::string& scope, const GradCheckSuiteOptions& opts, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto entries = run_gradcheck_suite(parse_gradcheck_scope(scope), opts);
  bool all = true;
  for (const auto& e : entries) {
    all = all && e.passed();
    out << std::left << std::setw(30) << e.name << std::right << " " << std::scientific
        << std::setprecision(3) << e.max_rel_error << std::defaultfloat << "  (tol " << e.tolerance
        << ", " << e.checked << " checked, worst " << e.worst << ")  " << (e.passed() ? "ok" : "FAIL")
        << "\n";
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  out << (all ? "gradcheck passed" : "gradcheck FAILED") << " (" << entries.size() << " checks, "
      << std::fixed << std::setprecision(1) << secs << " s)" << std::defaultfloat << "\n";
  return all ? kExitOk : kExitFailure;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"ResNet+ image classifier: training, evaluation and diagnostics", "resnetplus"};
  app.require_subcommand(1);
  app.failure_message(CLI::FailureMessage::help);

  RunFlags train_flags, eval_flags, ablate_flags;
  auto* train = app.add_subcommand("train", "Train a model and keep the best checkpoint");
  train_flags.attach(*train, true);

  EvalFlags ef;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint and write a metrics report");
  eval_flags.attach(*eval, false);
  eval->add_option("--checkpoint", ef.checkpoint, "Checkpoint file")->required();
  eval->add_option("--split", ef.split, "train, val or test")->capture_default_str();
  eval->add_option("--weights", ef.weights, "raw or ema")->capture_default_str();
  eval->add_option("--format", ef.formats, "Comma-separated: json, csv, svg")->capture_default_str();

  bool dry_run = false;
  auto* ablate = app.add_subcommand("ablate", "Train the 16-way CBAM x SCO x RC x MS grid");
  ablate_flags.attach(*ablate, false);
  ablate->add_flag("--dry-run", dry_run, "Print the resolved configurations only");

  std::string predict_ckpt, predict_weights = "ema";
  std::vector<std::string> predict_files;
  auto* predict = app.add_subcommand("predict", "Classify image files");
  predict->add_option("--checkpoint", predict_ckpt, "Checkpoint file")->required();
  predict->add_option("--weights", predict_weights, "raw or ema")->capture_default_str();
  predict->add_option("images", predict_files, "PNG or JPEG files")->required();

  std::string synth_dir, synth_spec = "3x60";
  std::size_t synth_size = 32;
  std::uint64_t synth_seed = 0;
  auto* synth = app.add_subcommand("synth", "Write the synthetic stripes corpus as PNG files");
  synth->add_option("--out", synth_dir, "Dataset directory")->required();
  synth->add_option("--spec", synth_spec, "KxN: K classes, N training images")->capture_default_str();
  synth->add_option("--size", synth_size, "Image side length")->capture_default_str();
  synth->add_option("--seed", synth_seed, "Seed")->capture_default_str();

  std::string scope = "primitives";
  GradCheckSuiteOptions gopts;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks in f64");
  gradcheck->add_option("--scope", scope, "primitives, blocks or full")->capture_default_str();
  gradcheck->add_option("--seed", gopts.seed, "Fixture seed")->capture_default_str();
  gradcheck->add_option("--eps", gopts.eps, "Step size (0 = per-fixture default)");
  gradcheck->add_option("--per-tensor", gopts.per_tensor, "Elements checked per parameter tensor")
      ->capture_default_str();
  gradcheck->add_flag("--corrupt-adjoint", gopts.corrupt_adjoint,
                      "Add an operation with a deliberately wrong adjoint (negative control)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(train_flags, out, err);
    if (*eval) return cmd_eval(eval_flags, ef, out, err);
    if (*ablate) return cmd_ablate(ablate_flags, dry_run, out, err);
    if (*predict) return cmd_predict(predict_ckpt, predict_weights, predict_files, out, err);
    if (*synth) return cmd_synth(synth_dir, synth_spec, synth_size, synth_seed, out);
    if (*gradcheck) return cmd_gradcheck(scope, gopts, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  } catch (const ArgumentError& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const CheckpointMismatch& e) {
    err << "error: checkpoint does not match the model (tensor '" << e.tensor() << "'): " << e.what()
        << "\n";
    return kExitData;
  } catch (const FormatError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const DimensionError& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const DivergenceError& e) {
    err << "error: training diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace rnp::cli
