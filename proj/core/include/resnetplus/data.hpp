#pragma once

// Dataset ingestion, augmentation, preprocessing, batching and the synthetic stripes corpus.

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "resnetplus/image.hpp"
#include "resnetplus/tensor.hpp"

namespace rnp {

enum class Split { kTrain, kVal, kTest };
std::string to_string(Split s);
Split parse_split(const std::string& s);

struct Sample {
  std::string path;                    // empty for inline samples
  std::shared_ptr<const Image> image;  // inline pixels (synthetic data)
  int label = 0;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> class_names;
  Split split = Split::kTrain;
  std::vector<std::string> warnings;
  std::vector<std::string> skipped;  // unreadable files, one path each

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::size_t num_classes() const { return class_names.size(); }
  std::vector<std::size_t> class_counts() const;
  std::vector<int> labels() const;
  /// Inline pixels or a fresh decode of the sample's file.
  Image image(std::size_t i) const;
};

/// Enumerates root/<split>/<class>/* (sorted class names, lexicographic paths). Empty class
/// directories and a missing or empty root produce warnings; undecodable files are skipped
/// and listed in `skipped`.
Dataset load_split(const std::string& root, Split split);
/// Class names are taken from `class_names` when given, so every split shares one index space.
Dataset load_split(const std::string& root, Split split, const std::vector<std::string>& class_names);
void write_skip_report(const std::string& path, const Dataset& ds);

struct Normalization {
  std::array<double, 3> mean{0.5, 0.5, 0.5};
  std::array<double, 3> std{0.25, 0.25, 0.25};
  friend bool operator==(const Normalization&, const Normalization&) = default;
};

/// Per-channel mean and standard deviation over every pixel of the dataset.
Normalization channel_stats(const Dataset& ds);

struct TransformSpec {
  bool enabled = true;
  double p = 0.5;
  friend bool operator==(const TransformSpec&, const TransformSpec&) = default;
};

struct AugmentPolicy {
  TransformSpec hflip{true, 0.5};
  TransformSpec affine{true, 0.5};
  TransformSpec blur{true, 0.3};
  TransformSpec noise{true, 0.3};
  TransformSpec crop{true, 0.5};
  TransformSpec contrast{true, 0.5};

  double max_rotation_deg = 15.0;
  double max_translate = 0.1;  // fraction of the side
  double min_scale = 0.9;
  double max_scale = 1.1;
  double max_blur_sigma = 1.5;
  double max_noise_sigma = 0.05;
  double max_crop = 0.1;  // fraction removed per side
  double min_contrast = 0.8;
  double max_contrast = 1.2;

  // Random-resized-crop bounds used by train-mode preprocessing.
  double min_area = 0.6;
  double max_aspect = 4.0 / 3.0;

  static AugmentPolicy none();
  /// Defaults without the horizontal flip: mirroring turns a stripe at angle a into
  /// one at pi - a, which is another class of the synthetic corpus.
  static AugmentPolicy synthetic();
  /// Clamps every parameter into its documented range.
  void clamp();

  friend bool operator==(const AugmentPolicy&, const AugmentPolicy&) = default;
};

Image hflip(const Image& img);
/// Rotation (degrees) and scale about the centre, then translation (fractions of the side);
/// bilinear resampling, zero fill.
Image affine(const Image& img, double rotation_deg, double tx, double ty, double scale);
Image gaussian_blur(const Image& img, double sigma);
Image add_gaussian_noise(const Image& img, double sigma, std::mt19937_64& rng);
/// Removes the given fractions from each side and resizes back to the original extent.
Image crop_sides(const Image& img, double left, double right, double top, double bottom);
Image linear_contrast(const Image& img, double alpha);

/// Each enabled transform fires independently with its probability, in the order
/// hflip, affine, blur, noise, crop, contrast. Output stays in [0,1].
Image augment(const Image& img, const AugmentPolicy& policy, std::mt19937_64& rng);

enum class PreprocessMode { kTrain, kEval };

struct PreprocessOptions {
  std::size_t image_size = 224;
  Normalization norm;
  AugmentPolicy policy;
};

/// Train: random resized crop to T, then augment. Eval: shorter side to round(1.14 T), centre
/// crop T. Both normalize per channel and return [3,T,T]. Images below 32 px raise FormatError
/// naming `name`.
Tensor<float> preprocess(const Image& img, PreprocessMode mode, const PreprocessOptions& opts,
                         std::mt19937_64& rng, const std::string& name = "<inline>");

enum class Balance { kNone, kAugment };

/// Duplicates minority-class samples (cyclically, in order) until every class matches the
/// largest one. Duplicates draw their own augmentation streams.
Dataset balance_by_oversampling(const Dataset& ds);

struct Manifest {
  std::string root;
  std::size_t image_size = 224;
  std::vector<std::string> class_names;
  Normalization norm;
  AugmentPolicy policy;
  Balance balance = Balance::kNone;
};

/// key=value file with [dataset], [normalization] and [augment] sections.
Manifest read_manifest(const std::string& path);
void write_manifest(const std::string& path, const Manifest& m);
/// Scans root/train for class names and channel statistics.
Manifest build_manifest(const std::string& root, std::size_t image_size);

/// Class k: stripes at angle k*pi/K (plus small angle and phase jitter) with pixel noise.
Dataset synth_dataset(std::size_t num_classes, std::size_t per_class, std::size_t size,
                      std::uint64_t seed, Split split = Split::kTrain);

struct DataSplits {
  Dataset train, val, test;
};

/// `train_total` training images split evenly over K classes; val and test get half as many.
DataSplits synth_splits(std::size_t num_classes, std::size_t train_total, std::size_t size,
                        std::uint64_t seed);
DataSplits load_splits(const Manifest& m);
/// Writes root/<split>/<class>/NNNN.png for every sample with inline pixels.
void write_dataset_tree(const std::string& root, const DataSplits& splits);

/// Per-epoch sample order, cut into batches; the last partial batch is kept.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, std::size_t batch_size,
                                                    bool shuffle, std::uint64_t seed,
                                                    std::uint64_t epoch);

struct Batch {
  Tensor<float> images;  // [N,3,T,T]
  std::vector<int> labels;
  std::vector<std::size_t> indices;
};

/// Each sample's augmentation stream is seeded from (seed, epoch, sample index), so the
/// result does not depend on how decoding is distributed over threads.
Batch make_batch(const Dataset& ds, const std::vector<std::size_t>& indices, PreprocessMode mode,
                 const PreprocessOptions& opts, std::uint64_t seed, std::uint64_t epoch);

class BatchIter {
 public:
  BatchIter(const Dataset& ds, std::size_t batch_size, bool shuffle, std::uint64_t seed,
            std::uint64_t epoch, PreprocessMode mode, PreprocessOptions opts);
  std::optional<Batch> next();
  std::size_t batches() const { return order_.size(); }

 private:
  const Dataset& ds_;
  std::vector<std::vector<std::size_t>> order_;
  std::size_t pos_ = 0;
  std::uint64_t seed_, epoch_;
  PreprocessMode mode_;
  PreprocessOptions opts_;
};

}  // namespace rnp
