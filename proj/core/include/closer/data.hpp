#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "closer/rng.hpp"
#include "closer/tensor.hpp"

namespace closer {

struct ImageShape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  bool square() const { return rows == cols; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

struct Sample {
  std::vector<double> input;
  int label = 0;
};

/// Row-major sample matrix plus labels. Images are stored flattened
/// (single channel, row-major) with pixel values in [0, 1].
class Dataset {
 public:
  Dataset() = default;
  explicit Dataset(std::size_t dim, std::optional<ImageShape> image = std::nullopt);

  std::size_t size() const noexcept { return labels_.size(); }
  bool empty() const noexcept { return labels_.empty(); }
  std::size_t dim() const noexcept { return dim_; }
  const std::optional<ImageShape>& image_shape() const noexcept { return image_; }

  void add(std::span<const double> input, int label);
  void append(const Dataset& other);

  std::span<const double> input(std::size_t i) const;
  int label(std::size_t i) const { return labels_[i]; }
  const std::vector<int>& labels() const noexcept { return labels_; }
  const std::vector<double>& raw_inputs() const noexcept { return inputs_; }
  Sample sample(std::size_t i) const;

  /// Sorted distinct labels.
  std::vector<int> classes() const;
  std::vector<std::size_t> indices_of(int label) const;

  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset filter_classes(std::span<const int> keep) const;

  /// [n, dim] matrix of the selected rows.
  Tensor batch(std::span<const std::size_t> indices) const;
  Tensor all_inputs() const;

  friend bool operator==(const Dataset&, const Dataset&) = default;

 private:
  std::size_t dim_ = 0;
  std::optional<ImageShape> image_;
  std::vector<double> inputs_;
  std::vector<int> labels_;
};

struct GaussianClassesSpec {
  std::size_t classes = 2;
  std::size_t n_per_class = 1;
  std::size_t input_dim = 2;
  double center_separation = 1.0;  // radius of the sphere carrying the class centers
  double cluster_std = 0.0;
  // Each class is a mixture of this many equally likely sub-clusters whose
  // centers sit at N(0, mode_spread² I) offsets from the class center.
  std::size_t modes_per_class = 1;
  double mode_spread = 0.0;
  std::uint64_t seed = 0;
  /// When set, samples are tagged as images of this shape (rows*cols must
  /// equal input_dim), which enables crop/flip/rotation.
  std::optional<ImageShape> image;
};

/// Class centers drawn uniformly on a sphere of radius center_separation;
/// samples are center + N(0, cluster_std² I). Labels 0..classes-1, grouped by
/// class.
Dataset synth_gaussian_classes(const GaussianClassesSpec& spec);

/// Moves test_per_class samples of every class (chosen by seed) into the
/// second dataset. Every class needs more than test_per_class samples.
std::pair<Dataset, Dataset> train_test_split(const Dataset& data, std::size_t test_per_class,
                                             std::uint64_t seed);

// IDX (big-endian): images magic 0x00000803 then u32 count, rows, cols, then
// count*rows*cols u8 pixels; labels magic 0x00000801 then u32 count, then
// count u8 labels. Pixels are scaled by 1/255.
Dataset parse_idx(std::span<const std::uint8_t> images, std::span<const std::uint8_t> labels);
Dataset load_idx(const std::filesystem::path& images_path,
                 const std::filesystem::path& labels_path);
/// Writes an image dataset back to IDX, rounding pixels to the nearest u8.
void write_idx(const Dataset& data, const std::filesystem::path& images_path,
               const std::filesystem::path& labels_path);

// CSV: one row per sample, label first, then the input columns. A leading
// header row is written and skipped on load.
void save_csv(const Dataset& data, const std::filesystem::path& path);
Dataset load_csv(const std::filesystem::path& path, std::optional<ImageShape> image = {});

struct CropSpec {
  std::size_t pad = 0;
  std::size_t size = 0;  // must equal the image side so dimensionality is kept
};

struct AugmentationSpec {
  std::optional<CropSpec> crop;
  double hflip_probability = 0.0;
  double noise_std = 0.0;
  std::uint64_t stream = 0;  // seed-stream id mixed into per-sample seeds

  void validate() const;
};

/// Pad-then-random-crop (images only), horizontal flip with the configured
/// probability (images only), then additive Gaussian noise clipped to [0, 1].
/// An all-off spec is the identity.
std::vector<double> augment(std::span<const double> input, const std::optional<ImageShape>& image,
                            const AugmentationSpec& spec, Rng& rng);
Sample augment(const Sample& sample, const std::optional<ImageShape>& image,
               const AugmentationSpec& spec, Rng& rng);

/// Seed for augmenting one sample in one epoch, independent of scheduling.
std::uint64_t augmentation_seed(std::uint64_t base_seed, const AugmentationSpec& spec,
                                std::size_t epoch, std::size_t sample_index);

/// Rotates a square image clockwise by quarter_turns * 90°: pixel (r, c) of
/// an n×n image lands at (c, n−1−r) per turn.
std::vector<double> rotate_image(std::span<const double> image, std::size_t side,
                                 int quarter_turns);

/// Every image of source_class rotated by `degrees` (90, 180 or 270), labelled
/// with `new_label` or, when absent, one past the largest existing label.
Dataset rotate_class_synthesis(const Dataset& data, int source_class, int degrees,
                               std::optional<int> new_label = std::nullopt);

}  // namespace closer
