#include "resnetplus/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>

#include <boost/algorithm/string.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "resnetplus/errors.hpp"
#include "resnetplus/parallel.hpp"

namespace fs = std::filesystem;

namespace rnp {

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw ArgumentError("unknown split '" + s + "' (train, val, test)");
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(class_names.size(), 0);
  for (const auto& s : samples) ++counts.at(static_cast<std::size_t>(s.label));
  return counts;
}

std::vector<int> Dataset::labels() const {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

Image Dataset::image(std::size_t i) const {
  const Sample& s = samples.at(i);
  if (s.image) return *s.image;
  return decode_image(s.path);
}

// --- directory trees ---------------------------------------------------------------------

namespace {

std::vector<std::string> sorted_subdirs(const fs::path& dir) {
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory() && e.path().filename().string().front() != '.') {
      names.push_back(e.path().filename().string());
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

Dataset load_split(const std::string& root, Split split) {
  return load_split(root, split, {});
}

Dataset load_split(const std::string& root, Split split,
                   const std::vector<std::string>& class_names) {
  Dataset ds;
  ds.split = split;
  const fs::path dir = fs::path(root) / to_string(split);
  if (!fs::is_directory(dir)) {
    ds.class_names = class_names;
    ds.warnings.push_back("split directory missing: " + dir.string());
    return ds;
  }
  const auto found = sorted_subdirs(dir);
  ds.class_names = class_names.empty() ? found : class_names;
  if (ds.class_names.empty()) {
    ds.warnings.push_back("no class directories under " + dir.string());
    return ds;
  }
  for (const auto& name : found) {
    if (std::find(ds.class_names.begin(), ds.class_names.end(), name) == ds.class_names.end()) {
      ds.warnings.push_back("ignoring unknown class directory " + (dir / name).string());
    }
  }
  for (std::size_t k = 0; k < ds.class_names.size(); ++k) {
    const fs::path cdir = dir / ds.class_names[k];
    if (!fs::is_directory(cdir)) {
      ds.warnings.push_back("class directory missing: " + cdir.string());
      continue;
    }
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(cdir)) {
      if (e.is_regular_file() && e.path().filename().string().front() != '.') {
        files.push_back(e.path().string());
      }
    }
    std::sort(files.begin(), files.end());
    std::size_t kept = 0;
    for (const auto& f : files) {
      try {
        probe_image(f);
      } catch (const FormatError&) {
        ds.skipped.push_back(f);
        continue;
      }
      ds.samples.push_back({f, nullptr, static_cast<int>(k)});
      ++kept;
    }
    if (kept == 0) ds.warnings.push_back("empty class directory: " + cdir.string());
  }
  return ds;
}

void write_skip_report(const std::string& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write skip report: " + path);
  for (const auto& p : ds.skipped) out << p << "\n";
}

Normalization channel_stats(const Dataset& ds) {
  if (ds.empty()) return {};
  std::array<double, 3> sum{}, sq{};
  double count = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const Image img = ds.image(i);
    for (std::size_t p = 0; p < img.width * img.height; ++p) {
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = img.pixels[p * 3 + c];
        sum[c] += v;
        sq[c] += v * v;
      }
    }
    count += static_cast<double>(img.width * img.height);
  }
  Normalization n;
  for (std::size_t c = 0; c < 3; ++c) {
    n.mean[c] = sum[c] / count;
    const double var = std::max(0.0, sq[c] / count - n.mean[c] * n.mean[c]);
    n.std[c] = std::max(std::sqrt(var), 1e-3);
  }
  return n;
}

// --- augmentation --------------------------------------------------------------------------

AugmentPolicy AugmentPolicy::none() {
  AugmentPolicy p;
  for (TransformSpec* t : {&p.hflip, &p.affine, &p.blur, &p.noise, &p.crop, &p.contrast}) {
    t->enabled = false;
  }
  p.min_area = 1.0;
  p.max_aspect = 1.0;
  return p;
}

AugmentPolicy AugmentPolicy::synthetic() {
  AugmentPolicy p;
  p.hflip.enabled = false;
  return p;
}

void AugmentPolicy::clamp() {
  for (TransformSpec* t : {&hflip, &affine, &blur, &noise, &crop, &contrast}) {
    t->p = std::clamp(t->p, 0.0, 1.0);
  }
  max_rotation_deg = std::clamp(max_rotation_deg, 0.0, 15.0);
  max_translate = std::clamp(max_translate, 0.0, 0.1);
  min_scale = std::clamp(min_scale, 0.9, 1.0);
  max_scale = std::clamp(max_scale, 1.0, 1.1);
  max_blur_sigma = std::clamp(max_blur_sigma, 0.0, 1.5);
  max_noise_sigma = std::clamp(max_noise_sigma, 0.0, 0.05);
  max_crop = std::clamp(max_crop, 0.0, 0.1);
  min_contrast = std::clamp(min_contrast, 0.8, 1.0);
  max_contrast = std::clamp(max_contrast, 1.0, 1.2);
  min_area = std::clamp(min_area, 0.08, 1.0);
  max_aspect = std::clamp(max_aspect, 1.0, 2.0);
}

Image hflip(const Image& img) {
  Image out(img.width, img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      for (std::size_t c = 0; c < 3; ++c) out.at(y, img.width - 1 - x, c) = img.at(y, x, c);
    }
  }
  return out;
}

namespace {

float sample_zero_fill(const Image& img, double fx, double fy, std::size_t c) {
  const double x0f = std::floor(fx), y0f = std::floor(fy);
  const double wx = fx - x0f, wy = fy - y0f;
  const auto x0 = static_cast<long>(x0f), y0 = static_cast<long>(y0f);
  auto px = [&](long y, long x) -> double {
    if (x < 0 || y < 0 || x >= static_cast<long>(img.width) || y >= static_cast<long>(img.height)) {
      return 0.0;
    }
    return img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c);
  };
  const double top = px(y0, x0) * (1 - wx) + px(y0, x0 + 1) * wx;
  const double bot = px(y0 + 1, x0) * (1 - wx) + px(y0 + 1, x0 + 1) * wx;
  return static_cast<float>(top * (1 - wy) + bot * wy);
}

void clamp01(Image& img) {
  for (auto& v : img.pixels) v = std::clamp(v, 0.0f, 1.0f);
}

}  // namespace

Image affine(const Image& img, double rotation_deg, double tx, double ty, double scale) {
  Image out(img.width, img.height);
  const double th = rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(th), s = std::sin(th);
  const double cx = (static_cast<double>(img.width) - 1) / 2.0;
  const double cy = (static_cast<double>(img.height) - 1) / 2.0;
  const double dx = tx * static_cast<double>(img.width);
  const double dy = ty * static_cast<double>(img.height);
  for (std::size_t y = 0; y < img.height; ++y) {
    for (std::size_t x = 0; x < img.width; ++x) {
      // Invert dst = R * s * (src - centre) + centre + t.
      const double u = (static_cast<double>(x) - cx - dx) / scale;
      const double v = (static_cast<double>(y) - cy - dy) / scale;
      const double sx = c * u + s * v + cx;
      const double sy = -s * u + c * v + cy;
      for (std::size_t ch = 0; ch < 3; ++ch) out.at(y, x, ch) = sample_zero_fill(img, sx, sy, ch);
    }
  }
  clamp01(out);
  return out;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (sigma < 1e-3) return img;
  const int radius = static_cast<int>(std::ceil(3 * sigma));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0;
  for (int i = -radius; i <= radius; ++i) {
    k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma));
    total += k[static_cast<std::size_t>(i + radius)];
  }
  for (auto& v : k) v /= total;
  const long w = static_cast<long>(img.width), h = static_cast<long>(img.height);
  auto clampi = [](long v, long hi) { return std::clamp(v, 0L, hi - 1); };
  Image tmp(img.width, img.height), out(img.width, img.height);
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          acc += k[static_cast<std::size_t>(i + radius)] *
                 img.at(static_cast<std::size_t>(y), static_cast<std::size_t>(clampi(x + i, w)), c);
        }
        tmp.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) = static_cast<float>(acc);
      }
    }
  }
  for (long y = 0; y < h; ++y) {
    for (long x = 0; x < w; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0;
        for (int i = -radius; i <= radius; ++i) {
          acc += k[static_cast<std::size_t>(i + radius)] *
                 tmp.at(static_cast<std::size_t>(clampi(y + i, h)), static_cast<std::size_t>(x), c);
        }
        out.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x), c) = static_cast<float>(acc);
      }
    }
  }
  clamp01(out);
  return out;
}

Image add_gaussian_noise(const Image& img, double sigma, std::mt19937_64& rng) {
  Image out = img;
  if (sigma <= 0) return out;
  std::normal_distribution<double> nd(0.0, sigma);
  for (auto& v : out.pixels) v = static_cast<float>(v + nd(rng));
  clamp01(out);
  return out;
}

Image crop_sides(const Image& img, double left, double right, double top, double bottom) {
  const auto w = static_cast<double>(img.width), h = static_cast<double>(img.height);
  const auto x0 = static_cast<std::size_t>(std::floor(left * w));
  const auto x1 = static_cast<std::size_t>(std::ceil(w - right * w));
  const auto y0 = static_cast<std::size_t>(std::floor(top * h));
  const auto y1 = static_cast<std::size_t>(std::ceil(h - bottom * h));
  if (x1 <= x0 || y1 <= y0) return img;
  return resize_bilinear(crop(img, x0, y0, x1 - x0, y1 - y0), img.width, img.height);
}

Image linear_contrast(const Image& img, double alpha) {
  Image out = img;
  for (auto& v : out.pixels) v = static_cast<float>((v - 0.5) * alpha + 0.5);
  clamp01(out);
  return out;
}

Image augment(const Image& img, const AugmentPolicy& policy, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  auto fires = [&](const TransformSpec& t) { return t.enabled && u01(rng) < t.p; };
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * u01(rng); };

  Image out = img;
  if (fires(policy.hflip)) out = hflip(out);
  if (fires(policy.affine)) {
    const double rot = uniform(-policy.max_rotation_deg, policy.max_rotation_deg);
    const double tx = uniform(-policy.max_translate, policy.max_translate);
    const double ty = uniform(-policy.max_translate, policy.max_translate);
    const double sc = uniform(policy.min_scale, policy.max_scale);
    out = affine(out, rot, tx, ty, sc);
  }
  if (fires(policy.blur)) out = gaussian_blur(out, uniform(0.0, policy.max_blur_sigma));
  if (fires(policy.noise)) out = add_gaussian_noise(out, uniform(0.0, policy.max_noise_sigma), rng);
  if (fires(policy.crop)) {
    const double l = uniform(0.0, policy.max_crop), r = uniform(0.0, policy.max_crop);
    const double t = uniform(0.0, policy.max_crop), b = uniform(0.0, policy.max_crop);
    out = crop_sides(out, l, r, t, b);
  }
  if (fires(policy.contrast)) {
    out = linear_contrast(out, uniform(policy.min_contrast, policy.max_contrast));
  }
  return out;
}

// --- preprocessing -------------------------------------------------------------------------

namespace {

Image random_resized_crop(const Image& img, std::size_t t, const AugmentPolicy& p,
                          std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double area = static_cast<double>(img.width * img.height);
  const double log_r = std::log(p.max_aspect);
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double target = area * (p.min_area + (1.0 - p.min_area) * u01(rng));
    const double ratio = std::exp(-log_r + 2 * log_r * u01(rng));
    const auto w = static_cast<std::size_t>(std::lround(std::sqrt(target * ratio)));
    const auto h = static_cast<std::size_t>(std::lround(std::sqrt(target / ratio)));
    if (w >= 1 && h >= 1 && w <= img.width && h <= img.height) {
      const auto x0 = static_cast<std::size_t>(u01(rng) * static_cast<double>(img.width - w + 1));
      const auto y0 = static_cast<std::size_t>(u01(rng) * static_cast<double>(img.height - h + 1));
      return resize_bilinear(crop(img, std::min(x0, img.width - w), std::min(y0, img.height - h), w, h),
                             t, t);
    }
  }
  return resize_bilinear(img, t, t);
}

Image resize_center_crop(const Image& img, std::size_t t) {
  const auto shorter = static_cast<double>(std::min(img.width, img.height));
  const double target = std::round(1.14 * static_cast<double>(t));
  const double s = target / shorter;
  const auto w = std::max<std::size_t>(t, static_cast<std::size_t>(std::lround(img.width * s)));
  const auto h = std::max<std::size_t>(t, static_cast<std::size_t>(std::lround(img.height * s)));
  const Image resized = resize_bilinear(img, w, h);
  return crop(resized, (w - t) / 2, (h - t) / 2, t, t);
}

}  // namespace

Tensor<float> preprocess(const Image& img, PreprocessMode mode, const PreprocessOptions& opts,
                         std::mt19937_64& rng, const std::string& name) {
  if (img.width < 32 || img.height < 32) {
    throw FormatError("image too small (" + std::to_string(img.width) + "x" +
                      std::to_string(img.height) + ", need >= 32 px): " + name);
  }
  const std::size_t t = opts.image_size;
  if (t < 1) throw ArgumentError("preprocess: image_size must be positive");
  Image ready = mode == PreprocessMode::kTrain
                    ? augment(random_resized_crop(img, t, opts.policy, rng), opts.policy, rng)
                    : resize_center_crop(img, t);
  Tensor<float> out({3, t, t});
  for (std::size_t c = 0; c < 3; ++c) {
    const double m = opts.norm.mean[c], s = opts.norm.std[c];
    for (std::size_t y = 0; y < t; ++y) {
      for (std::size_t x = 0; x < t; ++x) {
        out[(c * t + y) * t + x] = static_cast<float>((ready.at(y, x, c) - m) / s);
      }
    }
  }
  return out;
}

Dataset balance_by_oversampling(const Dataset& ds) {
  Dataset out = ds;
  const auto counts = ds.class_counts();
  if (counts.empty()) return out;
  const std::size_t target = *std::max_element(counts.begin(), counts.end());
  for (std::size_t k = 0; k < counts.size(); ++k) {
    if (counts[k] == 0) continue;
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (ds.samples[i].label == static_cast<int>(k)) members.push_back(i);
    }
    for (std::size_t j = 0; counts[k] + j < target; ++j) {
      out.samples.push_back(ds.samples[members[j % members.size()]]);
    }
  }
  return out;
}

// --- manifest ------------------------------------------------------------------------------

namespace {

namespace pt = boost::property_tree;

std::string join3(const std::array<double, 3>& a) {
  std::ostringstream s;
  s << std::setprecision(17) << a[0] << "," << a[1] << "," << a[2];
  return s.str();
}

std::array<double, 3> split3(const std::string& text, const std::string& key) {
  std::vector<std::string> parts;
  boost::split(parts, text, boost::is_any_of(","));
  if (parts.size() != 3) throw FormatError("manifest: '" + key + "' needs three values");
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    try {
      out[i] = std::stod(boost::trim_copy(parts[i]));
    } catch (const std::exception&) {
      throw FormatError("manifest: bad number in '" + key + "': " + parts[i]);
    }
  }
  return out;
}

struct NamedTransform {
  const char* name;
  TransformSpec AugmentPolicy::*member;
};

constexpr NamedTransform kTransforms[] = {
    {"hflip", &AugmentPolicy::hflip}, {"affine", &AugmentPolicy::affine},
    {"gaussian_blur", &AugmentPolicy::blur}, {"additive_gaussian_noise", &AugmentPolicy::noise},
    {"crop", &AugmentPolicy::crop}, {"linear_contrast", &AugmentPolicy::contrast}};

struct NamedParam {
  const char* name;
  double AugmentPolicy::*member;
};

constexpr NamedParam kParams[] = {
    {"max_rotation_deg", &AugmentPolicy::max_rotation_deg},
    {"max_translate", &AugmentPolicy::max_translate},
    {"min_scale", &AugmentPolicy::min_scale},
    {"max_scale", &AugmentPolicy::max_scale},
    {"max_blur_sigma", &AugmentPolicy::max_blur_sigma},
    {"max_noise_sigma", &AugmentPolicy::max_noise_sigma},
    {"max_crop", &AugmentPolicy::max_crop},
    {"min_contrast", &AugmentPolicy::min_contrast},
    {"max_contrast", &AugmentPolicy::max_contrast},
    {"min_area", &AugmentPolicy::min_area},
    {"max_aspect", &AugmentPolicy::max_aspect}};

}  // namespace

Manifest read_manifest(const std::string& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    throw FormatError("cannot read manifest: " + std::string(e.what()));
  }
  Manifest m;
  try {
    m.root = tree.get<std::string>("dataset.root");
    const fs::path base = fs::path(path).parent_path();
    if (fs::path(m.root).is_relative()) m.root = (base / m.root).lexically_normal().string();
    m.image_size = tree.get<std::size_t>("dataset.image_size", 224);
    const std::string classes = tree.get<std::string>("dataset.classes", "");
    if (!classes.empty()) {
      boost::split(m.class_names, classes, boost::is_any_of(","));
      for (auto& c : m.class_names) boost::trim(c);
    }
    const std::string balance = tree.get<std::string>("dataset.balance", "none");
    if (balance == "augment") {
      m.balance = Balance::kAugment;
    } else if (balance != "none") {
      throw FormatError("manifest: balance must be 'none' or 'augment', got '" + balance + "'");
    }
    if (auto v = tree.get_optional<std::string>("normalization.mean")) {
      m.norm.mean = split3(*v, "normalization.mean");
    }
    if (auto v = tree.get_optional<std::string>("normalization.std")) {
      m.norm.std = split3(*v, "normalization.std");
    }
    if (auto list = tree.get_optional<std::string>("augment.enabled")) {
      std::vector<std::string> names;
      boost::split(names, *list, boost::is_any_of(","));
      for (auto& n : names) boost::trim(n);
      for (const auto& t : kTransforms) {
        (m.policy.*t.member).enabled = std::find(names.begin(), names.end(), t.name) != names.end();
      }
    }
    for (const auto& t : kTransforms) {
      (m.policy.*t.member).p =
          tree.get<double>(std::string("augment.") + t.name + "_p", (m.policy.*t.member).p);
    }
    for (const auto& p : kParams) {
      m.policy.*p.member = tree.get<double>(std::string("augment.") + p.name, m.policy.*p.member);
    }
  } catch (const pt::ptree_error& e) {
    throw FormatError("manifest " + path + ": " + e.what());
  }
  m.policy.clamp();
  return m;
}

void write_manifest(const std::string& path, const Manifest& m) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write manifest: " + path);
  out << std::setprecision(17);
  out << "[dataset]\n";
  out << "root = " << m.root << "\n";
  out << "image_size = " << m.image_size << "\n";
  out << "classes = " << boost::join(m.class_names, ",") << "\n";
  out << "splits = train,val,test\n";
  out << "balance = " << (m.balance == Balance::kAugment ? "augment" : "none") << "\n\n";
  out << "[normalization]\n";
  out << "mean = " << join3(m.norm.mean) << "\n";
  out << "std = " << join3(m.norm.std) << "\n\n";
  out << "[augment]\n";
  std::vector<std::string> enabled;
  for (const auto& t : kTransforms) {
    if ((m.policy.*t.member).enabled) enabled.emplace_back(t.name);
  }
  out << "enabled = " << boost::join(enabled, ",") << "\n";
  for (const auto& t : kTransforms) out << t.name << "_p = " << (m.policy.*t.member).p << "\n";
  for (const auto& p : kParams) out << p.name << " = " << m.policy.*p.member << "\n";
}

Manifest build_manifest(const std::string& root, std::size_t image_size) {
  Manifest m;
  m.root = root;
  m.image_size = image_size;
  const Dataset train = load_split(root, Split::kTrain);
  m.class_names = train.class_names;
  m.norm = train.empty() ? Normalization{} : channel_stats(train);
  return m;
}

DataSplits load_splits(const Manifest& m) {
  DataSplits s;
  s.train = load_split(m.root, Split::kTrain, m.class_names);
  const auto& names = s.train.class_names;
  s.val = load_split(m.root, Split::kVal, names);
  s.test = load_split(m.root, Split::kTest, names);
  if (m.balance == Balance::kAugment) s.train = balance_by_oversampling(s.train);
  return s;
}

// --- synthetic corpus ----------------------------------------------------------------------

Dataset synth_dataset(std::size_t num_classes, std::size_t per_class, std::size_t size,
                      std::uint64_t seed, Split split) {
  if (num_classes < 2) throw ArgumentError("synth_dataset: need at least 2 classes");
  if (size < 32) throw ArgumentError("synth_dataset: size must be >= 32");
  Dataset ds;
  ds.split = split;
  for (std::size_t k = 0; k < num_classes; ++k) ds.class_names.push_back("class" + std::to_string(k));

  std::seed_seq seq{seed, static_cast<std::uint64_t>(split), std::uint64_t{0x5eed}};
  std::mt19937_64 rng(seq);
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.08);
  const double period = static_cast<double>(size) / 2.5;
  const double centre = (static_cast<double>(size) - 1) / 2.0;
  const double pi = std::numbers::pi;

  // Interleave classes so any prefix stays near-balanced.
  for (std::size_t i = 0; i < per_class; ++i) {
    for (std::size_t k = 0; k < num_classes; ++k) {
      const double angle = pi * static_cast<double>(k) / static_cast<double>(num_classes) +
                           jitter(rng) * 4.0 * pi / 180.0;
      const double phase = jitter(rng) * 0.3;
      const double ca = std::cos(angle), sa = std::sin(angle);
      auto img = std::make_shared<Image>(size, size);
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          const double d = (static_cast<double>(x) - centre) * ca + (static_cast<double>(y) - centre) * sa;
          const double base = 0.5 + 0.3 * std::sin(2 * pi * d / period + phase);
          for (std::size_t c = 0; c < 3; ++c) {
            img->at(y, x, c) = static_cast<float>(std::clamp(base + noise(rng), 0.0, 1.0));
          }
        }
      }
      ds.samples.push_back({"", std::move(img), static_cast<int>(k)});
    }
  }
  return ds;
}

DataSplits synth_splits(std::size_t num_classes, std::size_t train_total, std::size_t size,
                        std::uint64_t seed) {
  const std::size_t per = std::max<std::size_t>(1, train_total / num_classes);
  const std::size_t half = std::max<std::size_t>(1, per / 2);
  return {synth_dataset(num_classes, per, size, seed, Split::kTrain),
          synth_dataset(num_classes, half, size, seed, Split::kVal),
          synth_dataset(num_classes, half, size, seed, Split::kTest)};
}

void write_dataset_tree(const std::string& root, const DataSplits& splits) {
  for (const Dataset* ds : {&splits.train, &splits.val, &splits.test}) {
    std::vector<std::size_t> counter(ds->num_classes(), 0);
    for (const auto& name : ds->class_names) {
      fs::create_directories(fs::path(root) / to_string(ds->split) / name);
    }
    for (const auto& s : ds->samples) {
      if (!s.image) continue;
      std::ostringstream file;
      file << std::setw(4) << std::setfill('0') << counter[static_cast<std::size_t>(s.label)]++ << ".png";
      encode_png((fs::path(root) / to_string(ds->split) /
                  ds->class_names[static_cast<std::size_t>(s.label)] / file.str())
                     .string(),
                 *s.image);
    }
  }
}

// --- batching ------------------------------------------------------------------------------

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    bool shuffle, std::uint64_t seed,
                                                    std::uint64_t epoch) {
  if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (shuffle) {
    std::seed_seq seq{seed, epoch, std::uint64_t{0xba7c4}};
    std::mt19937_64 rng(seq);
    std::shuffle(order.begin(), order.end(), rng);
  }
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t i = 0; i < n; i += batch_size) {
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return out;
}

Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& indices, PreprocessMode mode,
                 const PreprocessOptions& opts, std::uint64_t seed, std::uint64_t epoch) {
  if (indices.empty()) throw ArgumentError("make_batch: empty index list");
  const std::size_t t = opts.image_size;
  const std::size_t per = 3 * t * t;
  Batch b;
  b.images = Tensor<float>({indices.size(), 3, t, t});
  b.indices = indices;
  b.labels.resize(indices.size());
  parallel_for(indices.size(), [&](std::size_t j) {
    const std::size_t i = indices[j];
    std::seed_seq seq{seed, epoch, static_cast<std::uint64_t>(i)};
    std::mt19937_64 rng(seq);
    const Sample& s = ds.samples.at(i);
    const Tensor<float> x = preprocess(ds.image(i), mode, opts, rng, s.path.empty() ? "<inline>" : s.path);
    std::copy(x.data().begin(), x.data().end(), b.images.ptr() + j * per);
    b.labels[j] = s.label;
  });
  return b;
}

BatchIter::BatchIter(const Dataset& ds, std::size_t batch_size, bool shuffle, std::uint64_t seed,
                     std::uint64_t epoch, PreprocessMode mode, PreprocessOptions opts)
    : ds_(ds),
      order_(batch_indices(ds.size(), batch_size, shuffle, seed, epoch)),
      seed_(seed),
      epoch_(epoch),
      mode_(mode),
      opts_(std::move(opts)) {}

std::optional<Batch> BatchIter::next() {
  if (pos_ >= order_.size()) return std::nullopt;
  return make_batch(ds_, order_[pos_++], mode_, opts_, seed_, epoch_);
}

}  // namespace rnp
