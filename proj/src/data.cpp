#include "contrastlab/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>

#include "contrastlab/errors.hpp"
#include "contrastlab/rng.hpp"

namespace contrastlab {

namespace fs = std::filesystem;

namespace {

constexpr std::size_t kCifarSide = 32;
constexpr std::size_t kCifarRecord = 1 + 3 * kCifarSide * kCifarSide;
constexpr int kCifarTrainFiles = 5;

std::string lowercase(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

const std::vector<std::string>& classes_of(DatasetSource source) {
  return source == DatasetSource::Cifar10 ? cifar10_classes() : synthetic_tiny_classes();
}

std::vector<char> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset file", path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("error reading dataset file", path.string());
  return bytes;
}

// Appends the records of one labelled-binary file to `out`.
void read_labelled_records(const fs::path& path, std::size_t side, std::size_t first_index,
                           std::size_t class_count, ImageCollection& out, std::size_t& next_index) {
  const std::size_t record = 1 + 3 * side * side;
  const auto bytes = read_file(path);
  if (bytes.empty() || bytes.size() % record != 0) {
    throw IoError("corrupt dataset file (size " + std::to_string(bytes.size()) +
                      " is not a multiple of " + std::to_string(record) + ")",
                  path.string());
  }
  const std::size_t n = bytes.size() / record;
  for (std::size_t i = 0; i < n; ++i) {
    const auto* rec = reinterpret_cast<const std::uint8_t*>(bytes.data() + i * record);
    if (rec[0] >= class_count) {
      throw IoError("corrupt dataset file (label " + std::to_string(rec[0]) + " in record " +
                        std::to_string(i) + ")",
                    path.string());
    }
    out.push_back({rec + 1, record - 1}, rec[0], first_index + i);
  }
  next_index = first_index + n;
}

ImageCollection load_unfiltered(const DatasetSpec& spec) {
  if (spec.source == DatasetSource::SyntheticTiny) {
    if (spec.root.empty()) return generate_synthetic_tiny(spec.synthetic_count, spec.synthetic_seed);
    ImageCollection out(3, kTinyImageSide, kTinyImageSide, synthetic_tiny_classes());
    std::size_t next = 0;
    read_labelled_records(fs::path(spec.root) / kTinyDatasetFile, kTinyImageSide, 0,
                          synthetic_tiny_classes().size(), out, next);
    return out;
  }
  std::string root = spec.root;
  if (root.empty()) {
    if (const char* env = std::getenv(kDataRootEnv)) root = env;
  }
  if (root.empty()) {
    throw ConfigError(std::string("dataset.root is empty and ") + kDataRootEnv + " is not set");
  }
  // Accept either the directory holding the batch files or its parent.
  fs::path dir(root);
  if (!fs::exists(dir / "data_batch_1.bin") && fs::exists(dir / "cifar-10-batches-bin")) {
    dir /= "cifar-10-batches-bin";
  }
  ImageCollection out(3, kCifarSide, kCifarSide, cifar10_classes());
  std::size_t next = 0;
  for (int f = 1; f <= kCifarTrainFiles; ++f) {
    read_labelled_records(dir / ("data_batch_" + std::to_string(f) + ".bin"), kCifarSide, next,
                          cifar10_classes().size(), out, next);
  }
  return out;
}

}  // namespace

std::string_view source_name(DatasetSource source) noexcept {
  return source == DatasetSource::Cifar10 ? "cifar10" : "synthetic-tiny";
}

DatasetSource parse_source(std::string_view name) {
  if (name == "cifar10") return DatasetSource::Cifar10;
  if (name == "synthetic-tiny") return DatasetSource::SyntheticTiny;
  throw ConfigError("dataset.source must be cifar10 or synthetic-tiny, got '" + std::string(name) + "'");
}

const std::vector<std::string>& cifar10_classes() {
  static const std::vector<std::string> names{"airplane", "automobile", "bird",  "cat",  "deer",
                                              "dog",      "frog",       "horse", "ship", "truck"};
  return names;
}

const std::vector<std::string>& synthetic_tiny_classes() {
  static const std::vector<std::string> names{"disc", "square"};
  return names;
}

void DatasetSpec::validate() const {
  if (included_classes.empty()) throw ConfigError("dataset.included_classes must be nonempty");
  const auto& known = classes_of(source);
  for (const auto& name : included_classes) {
    if (std::find(known.begin(), known.end(), lowercase(name)) == known.end()) {
      throw ConfigError("dataset.included_classes: unknown class '" + name + "' for source " +
                        std::string(source_name(source)));
    }
  }
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("dataset.train_fraction must be in (0, 1], got " + std::to_string(train_fraction));
  }
  if (subset_size && *subset_size == 0) throw ConfigError("dataset.subset_size must be > 0");
  if (source == DatasetSource::SyntheticTiny && synthetic_count == 0) {
    throw ConfigError("dataset.synthetic_count must be > 0");
  }
}

ImageCollection::ImageCollection(std::size_t channels, std::size_t height, std::size_t width,
                                 std::vector<std::string> class_names)
    : channels_(channels), height_(height), width_(width), class_names_(std::move(class_names)) {}

void ImageCollection::push_back(std::span<const std::uint8_t> pixels, int label,
                                std::size_t source_index) {
  if (pixels.size() != record_size()) {
    throw InvalidArgument("image record has " + std::to_string(pixels.size()) + " bytes, expected " +
                          std::to_string(record_size()));
  }
  pixels_.insert(pixels_.end(), pixels.begin(), pixels.end());
  labels_.push_back(label);
  source_indices_.push_back(source_index);
}

std::span<const std::uint8_t> ImageCollection::raw(std::size_t i) const {
  if (i >= size()) throw InvalidArgument("image position " + std::to_string(i) + " out of range");
  return {pixels_.data() + i * record_size(), record_size()};
}

Tensor ImageCollection::image(std::size_t i) const {
  const auto bytes = raw(i);
  Tensor out({channels_, height_, width_});
  for (std::size_t k = 0; k < bytes.size(); ++k) out[k] = static_cast<double>(bytes[k]) / 255.0;
  return out;
}

ImageCollection load_dataset(const DatasetSpec& spec) {
  spec.validate();
  const ImageCollection all = load_unfiltered(spec);
  const auto& names = all.class_names();
  std::vector<bool> keep(names.size(), false);
  for (const auto& name : spec.included_classes) {
    keep[static_cast<std::size_t>(std::find(names.begin(), names.end(), lowercase(name)) - names.begin())] = true;
  }
  ImageCollection out(all.channels(), all.height(), all.width(), names);
  const std::size_t cap = spec.subset_size.value_or(all.size());
  for (std::size_t i = 0; i < all.size() && out.size() < cap; ++i) {
    if (keep[static_cast<std::size_t>(all.label(i))]) out.push_back(all.raw(i), all.label(i), all.source_index(i));
  }
  return out;
}

ImageCollection generate_synthetic_tiny(std::size_t count, std::uint64_t seed) {
  constexpr std::size_t side = kTinyImageSide;
  ImageCollection out(3, side, side, synthetic_tiny_classes());
  std::vector<std::uint8_t> pixels(3 * side * side);
  const auto to_byte = [](double v) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  };
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(derive_seed(seed, 0, i));
    const int label = static_cast<int>(i % 2);
    std::array<double, 3> background{}, foreground{};
    for (auto& c : background) c = rng.uniform(0.0, 0.45);
    for (auto& c : foreground) c = rng.uniform(0.35, 1.0);
    const double cy = rng.uniform(2.0, 5.0), cx = rng.uniform(2.0, 5.0);
    const double extent = rng.uniform(1.4, 2.6);
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) {
        const double dy = static_cast<double>(y) + 0.5 - cy, dx = static_cast<double>(x) + 0.5 - cx;
        const bool inside = label == 0 ? dy * dy + dx * dx <= extent * extent
                                       : std::max(std::abs(dy), std::abs(dx)) <= extent;
        for (std::size_t c = 0; c < 3; ++c) {
          const double base = inside ? foreground[c] : background[c];
          pixels[(c * side + y) * side + x] = to_byte(base + 0.06 * rng.normal());
        }
      }
    }
    out.push_back(pixels, label, i);
  }
  return out;
}

void write_tiny_dataset(const ImageCollection& collection, const std::string& path) {
  if (collection.height() != kTinyImageSide || collection.width() != kTinyImageSide) {
    throw InvalidArgument("write_tiny_dataset expects 8x8 images");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create dataset file", path);
  for (std::size_t i = 0; i < collection.size(); ++i) {
    const auto label = static_cast<char>(collection.label(i));
    out.put(label);
    const auto raw = collection.raw(i);
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  }
  out.flush();
  if (!out) throw IoError("error writing dataset file", path);
}

SplitIndices split(const ImageCollection& collection, double train_fraction, std::uint64_t seed) {
  if (collection.size() == 0) throw ConfigError("cannot split an empty dataset");
  if (!(train_fraction > 0.0 && train_fraction <= 1.0)) {
    throw ConfigError("dataset.train_fraction must be in (0, 1], got " + std::to_string(train_fraction));
  }
  std::map<int, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < collection.size(); ++i) by_class[collection.label(i)].push_back(i);

  Rng rng(mix64(seed));
  SplitIndices out;
  for (auto& [label, positions] : by_class) {
    rng.shuffle(positions.begin(), positions.end());
    const auto n_train = static_cast<std::size_t>(
        std::lround(train_fraction * static_cast<double>(positions.size())));
    out.train.insert(out.train.end(), positions.begin(), positions.begin() + static_cast<std::ptrdiff_t>(n_train));
    out.validation.insert(out.validation.end(), positions.begin() + static_cast<std::ptrdiff_t>(n_train),
                          positions.end());
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());

  if (out.train.empty()) throw ConfigError("dataset.train_fraction yields an empty training split");
  if (out.validation.empty()) {
    if (train_fraction < 1.0) {
      throw ConfigError("dataset.train_fraction yields an empty validation split");
    }
    out.warnings.push_back("train_fraction is 1.0: validation split is empty");
  }
  return out;
}

ChannelStats channel_stats(const ImageCollection& collection, std::span<const std::size_t> positions) {
  ChannelStats stats;
  if (positions.empty() || collection.channels() != 3) return stats;
  const std::size_t plane = collection.height() * collection.width();
  std::array<double, 3> sum{}, sum_sq{};
  for (std::size_t p : positions) {
    const auto raw = collection.raw(p);
    for (std::size_t c = 0; c < 3; ++c) {
      for (std::size_t k = 0; k < plane; ++k) {
        const double v = static_cast<double>(raw[c * plane + k]) / 255.0;
        sum[c] += v;
        sum_sq[c] += v * v;
      }
    }
  }
  const double n = static_cast<double>(positions.size() * plane);
  for (std::size_t c = 0; c < 3; ++c) {
    stats.mean[c] = sum[c] / n;
    const double var = std::max(0.0, sum_sq[c] / n - stats.mean[c] * stats.mean[c]);
    stats.stddev[c] = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
  return stats;
}

PairBatch assemble_pair_batch(const ImageCollection& collection, std::span<const std::size_t> positions,
                              std::uint64_t epoch, const AugmentationConfig& aug, std::uint64_t run_seed,
                              const ChannelStats& normalization) {
  if (positions.empty()) throw InvalidArgument("assemble_pair_batch needs at least one source");
  const std::size_t side = aug.crop_size;
  PairBatch batch;
  batch.images = Tensor({2 * positions.size(), collection.channels(), side, side});
  const std::size_t plane = side * side;
  const auto normalise = [&](Tensor& view) {
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t k = 0; k < plane; ++k) {
        double& v = view[c * plane + k];
        v = (v - normalization.mean[c]) / normalization.stddev[c];
      }
  };
  for (std::size_t k = 0; k < positions.size(); ++k) {
    if (positions[k] >= collection.size()) {
      throw InvalidArgument("batch position " + std::to_string(positions[k]) + " out of range");
    }
    const std::size_t source = collection.source_index(positions[k]);
    auto views = make_views(collection.image(positions[k]), aug, derive_seed(run_seed, epoch, source), source);
    normalise(views.view_a);
    normalise(views.view_b);
    batch.images.set_slice(2 * k, views.view_a);
    batch.images.set_slice(2 * k + 1, views.view_b);
    batch.source_indices.push_back(source);
  }
  return batch;
}

}  // namespace contrastlab
