#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "contrastlab/augmentation.hpp"
#include "contrastlab/tensor.hpp"

namespace contrastlab {

enum class DatasetSource { Cifar10, SyntheticTiny };

std::string_view source_name(DatasetSource source) noexcept;
DatasetSource parse_source(std::string_view name);

// Environment variable consulted when DatasetSpec::root is empty for cifar10.
inline constexpr const char* kDataRootEnv = "CONTRASTLAB_DATA_ROOT";

// Label sets of the two sources, in label-id order.
const std::vector<std::string>& cifar10_classes();
const std::vector<std::string>& synthetic_tiny_classes();

// Side length of synthetic-tiny images.
inline constexpr std::size_t kTinyImageSide = 8;
// File name of a materialised synthetic-tiny dataset inside its root.
inline constexpr const char* kTinyDatasetFile = "synthetic_tiny.bin";

struct DatasetSpec {
  DatasetSource source = DatasetSource::Cifar10;
  std::vector<std::string> included_classes{"airplane", "automobile", "ship", "truck"};
  double train_fraction = 0.9;
  std::optional<std::size_t> subset_size;
  // cifar10: directory holding data_batch_{1..5}.bin (falls back to the
  // environment variable). synthetic-tiny: optional directory holding a
  // materialised dataset file; empty means generate in memory.
  std::string root;
  // synthetic-tiny only.
  std::size_t synthetic_count = 256;
  std::uint64_t synthetic_seed = 20240601;

  void validate() const;
};

// Raw 8-bit images, stored contiguously as (C, H, W) records.
class ImageCollection {
 public:
  ImageCollection(std::size_t channels, std::size_t height, std::size_t width,
                  std::vector<std::string> class_names);

  void push_back(std::span<const std::uint8_t> pixels, int label, std::size_t source_index);

  std::size_t size() const noexcept { return labels_.size(); }
  std::size_t channels() const noexcept { return channels_; }
  std::size_t height() const noexcept { return height_; }
  std::size_t width() const noexcept { return width_; }
  std::size_t record_size() const noexcept { return channels_ * height_ * width_; }

  // Image at position i as (C, H, W) doubles in [0, 1].
  Tensor image(std::size_t i) const;
  std::span<const std::uint8_t> raw(std::size_t i) const;
  int label(std::size_t i) const { return labels_.at(i); }
  std::size_t source_index(std::size_t i) const { return source_indices_.at(i); }
  const std::vector<int>& labels() const noexcept { return labels_; }
  const std::vector<std::string>& class_names() const noexcept { return class_names_; }

 private:
  std::size_t channels_, height_, width_;
  std::vector<std::string> class_names_;
  std::vector<std::uint8_t> pixels_;
  std::vector<int> labels_;
  std::vector<std::size_t> source_indices_;
};

// Only examples whose label is in spec.included_classes, ordered by
// original dataset index, truncated to spec.subset_size.
ImageCollection load_dataset(const DatasetSpec& spec);

// Procedural synthetic-tiny images (full label set, before filtering).
ImageCollection generate_synthetic_tiny(std::size_t count, std::uint64_t seed);

// Writes/reads the synthetic-tiny blob: per record one label byte followed
// by 3 * 8 * 8 channel-major pixel bytes (the CIFAR10 binary layout at 8x8).
void write_tiny_dataset(const ImageCollection& collection, const std::string& path);

// Positions into an ImageCollection.
struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::string> warnings;
};

// Class-stratified, seeded split. Throws ConfigError if a split that should
// be nonempty comes out empty; fraction 1.0 yields an empty validation split
// with a warning.
SplitIndices split(const ImageCollection& collection, double train_fraction, std::uint64_t seed);

struct ChannelStats {
  std::array<double, 3> mean{0.0, 0.0, 0.0};
  std::array<double, 3> stddev{1.0, 1.0, 1.0};
};

// Per-channel statistics of the [0, 1] pixel values over `positions`.
ChannelStats channel_stats(const ImageCollection& collection, std::span<const std::size_t> positions);

struct PairBatch {
  Tensor images;                            // (2N, C, H, W), pair k on rows 2k and 2k + 1
  std::vector<std::size_t> source_indices;  // N original dataset indices
};

// Two views per source from make_views seeded by derive_seed(run_seed,
// epoch, source_index), laid out consecutively and normalised last.
// `positions` index into `collection`.
PairBatch assemble_pair_batch(const ImageCollection& collection, std::span<const std::size_t> positions,
                              std::uint64_t epoch, const AugmentationConfig& aug, std::uint64_t run_seed,
                              const ChannelStats& normalization);

}  // namespace contrastlab
