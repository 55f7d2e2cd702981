#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>

#include "contrastlab/data.hpp"
#include "contrastlab/errors.hpp"

using namespace contrastlab;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("contrastlab_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// Five CIFAR-layout batch files where record r of file f has label (f + r) % 10.
fs::path write_fake_cifar(std::size_t records_per_file) {
  const fs::path dir = scratch_dir("cifar");
  for (int f = 1; f <= 5; ++f) {
    std::ofstream out(dir / ("data_batch_" + std::to_string(f) + ".bin"), std::ios::binary);
    for (std::size_t r = 0; r < records_per_file; ++r) {
      out.put(static_cast<char>((f + r) % 10));
      const std::string pixels(3072, static_cast<char>(r % 251));
      out.write(pixels.data(), static_cast<std::streamsize>(pixels.size()));
    }
  }
  return dir;
}

ImageCollection balanced(std::size_t per_class, int classes) {
  ImageCollection c(3, 2, 2, {"a", "b", "c", "d"});
  std::vector<std::uint8_t> px(12, 0);
  for (std::size_t i = 0; i < per_class * static_cast<std::size_t>(classes); ++i) {
    px[0] = static_cast<std::uint8_t>(i);
    c.push_back(px, static_cast<int>(i % static_cast<std::size_t>(classes)), i);
  }
  return c;
}

}  // namespace

TEST(LoadDataset, CifarLayoutFiltersClassesInIndexOrder) {
  DatasetSpec spec;
  spec.root = write_fake_cifar(20).string();
  const auto all10 = [&] {
    DatasetSpec s = spec;
    s.included_classes = cifar10_classes();
    return load_dataset(s);
  }();
  EXPECT_EQ(all10.size(), 100u);

  const auto vehicles = load_dataset(spec);
  // Labels 0, 1, 8, 9 are each 10% of the records.
  EXPECT_EQ(vehicles.size(), 40u);
  std::set<int> labels(vehicles.labels().begin(), vehicles.labels().end());
  EXPECT_EQ(labels, (std::set<int>{0, 1, 8, 9}));
  for (std::size_t i = 1; i < vehicles.size(); ++i) {
    EXPECT_LT(vehicles.source_index(i - 1), vehicles.source_index(i));
  }
  EXPECT_EQ(vehicles.image(0).shape(), (Tensor::Shape{3, 32, 32}));
}

TEST(LoadDataset, RealCifarVehicleCount) {
  const char* root = std::getenv(kDataRootEnv);
  if (!root) GTEST_SKIP() << kDataRootEnv << " not set";
  DatasetSpec spec;
  EXPECT_EQ(load_dataset(spec).size(), 20000u);
  spec.included_classes = cifar10_classes();
  EXPECT_EQ(load_dataset(spec).size(), 50000u);
}

TEST(LoadDataset, MissingAndCorruptFilesNameThePath) {
  DatasetSpec spec;
  spec.root = scratch_dir("missing").string();
  try {
    load_dataset(spec);
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(e.path().find("data_batch_1.bin"), std::string::npos);
  }
  const fs::path dir = write_fake_cifar(3);
  std::ofstream(dir / "data_batch_2.bin", std::ios::binary | std::ios::trunc) << "short";
  spec.root = dir.string();
  EXPECT_THROW(load_dataset(spec), IoError);
}

TEST(LoadDataset, UnknownClassIsConfigError) {
  DatasetSpec spec;
  spec.included_classes = {"airplane", "zeppelin"};
  EXPECT_THROW(load_dataset(spec), ConfigError);
}

TEST(LoadDataset, SyntheticTinySubset) {
  DatasetSpec spec;
  spec.source = DatasetSource::SyntheticTiny;
  spec.included_classes = {"disc", "square"};
  spec.subset_size = 64;
  const auto c = load_dataset(spec);
  EXPECT_EQ(c.size(), 64u);
  EXPECT_EQ(c.image(0).shape(), (Tensor::Shape{3, kTinyImageSide, kTinyImageSide}));
  spec.included_classes = {"Square"};
  const auto squares = load_dataset(spec);
  for (int l : squares.labels()) EXPECT_EQ(l, 1);
}

TEST(LoadDataset, TinyBlobRoundTrip) {
  const auto generated = generate_synthetic_tiny(40, 5);
  const fs::path dir = scratch_dir("tiny");
  write_tiny_dataset(generated, (dir / kTinyDatasetFile).string());
  DatasetSpec spec;
  spec.source = DatasetSource::SyntheticTiny;
  spec.included_classes = {"disc", "square"};
  spec.root = dir.string();
  const auto loaded = load_dataset(spec);
  ASSERT_EQ(loaded.size(), 40u);
  for (std::size_t i = 0; i < 40; ++i) {
    EXPECT_EQ(loaded.label(i), generated.label(i));
    EXPECT_TRUE(std::ranges::equal(loaded.raw(i), generated.raw(i)));
  }
}

TEST(Split, StratifiedArithmetic) {
  const auto c = balanced(25, 4);
  const auto s = split(c, 0.8, 9);
  EXPECT_EQ(s.train.size(), 80u);
  EXPECT_EQ(s.validation.size(), 20u);
  std::map<int, int> per_class;
  for (auto p : s.validation) ++per_class[c.label(p)];
  for (auto [label, n] : per_class) EXPECT_EQ(n, 5) << label;
}

TEST(Split, DeterministicDisjointExhaustive) {
  const auto c = balanced(13, 3);
  for (std::uint64_t seed = 0; seed < 25; ++seed) {
    const auto a = split(c, 0.7, seed);
    const auto b = split(c, 0.7, seed);
    EXPECT_EQ(a.train, b.train);
    EXPECT_EQ(a.validation, b.validation);
    std::set<std::size_t> all(a.train.begin(), a.train.end());
    for (auto p : a.validation) EXPECT_TRUE(all.insert(p).second);
    EXPECT_EQ(all.size(), c.size());
    std::map<int, int> train_per_class;
    for (auto p : a.train) ++train_per_class[c.label(p)];
    for (auto [label, n] : train_per_class) EXPECT_LE(std::abs(n - 0.7 * 13), 1.0);
  }
}

TEST(Split, BoundaryFractions) {
  const auto c = balanced(5, 2);
  const auto full = split(c, 1.0, 1);
  EXPECT_TRUE(full.validation.empty());
  EXPECT_EQ(full.warnings.size(), 1u);
  EXPECT_THROW(split(c, 0.01, 1), ConfigError);
  EXPECT_THROW(split(c, 0.99, 1), ConfigError);
}

TEST(PairBatch, SingleSourceAndDeterminism) {
  const auto c = generate_synthetic_tiny(4, 1);
  AugmentationConfig aug;
  aug.crop_size = kTinyImageSide;
  const std::vector<std::size_t> one{2};
  const auto b = assemble_pair_batch(c, one, 3, aug, 42, ChannelStats{});
  EXPECT_EQ(b.images.shape(), (Tensor::Shape{2, 3, kTinyImageSide, kTinyImageSide}));
  EXPECT_EQ(b.source_indices, (std::vector<std::size_t>{2}));

  const std::vector<std::size_t> three{0, 1, 3};
  const auto x = assemble_pair_batch(c, three, 3, aug, 42, ChannelStats{});
  const auto y = assemble_pair_batch(c, three, 3, aug, 42, ChannelStats{});
  EXPECT_EQ(x.images, y.images);
  EXPECT_NE(x.images, assemble_pair_batch(c, three, 4, aug, 42, ChannelStats{}).images);
}

TEST(PairBatch, RowsOfAPairShareTheirSource) {
  // With an identity chain both rows of a pair equal the normalised source.
  const auto c = generate_synthetic_tiny(6, 2);
  AugmentationConfig aug;
  aug.crop_size = kTinyImageSide;
  aug.pad_fraction = 0;
  aug.hflip_prob = aug.jitter_prob = aug.grayscale_prob = 0;
  aug.blur_kernel_fraction = 0;
  const std::vector<std::size_t> positions{5, 0, 3};
  const auto stats = channel_stats(c, positions);
  const auto b = assemble_pair_batch(c, positions, 1, aug, 0, stats);
  for (std::size_t k = 0; k < positions.size(); ++k) {
    EXPECT_EQ(b.images.slice(2 * k), b.images.slice(2 * k + 1));
    const Tensor src = c.image(positions[k]);
    EXPECT_NEAR(b.images.slice(2 * k)[0], (src[0] - stats.mean[0]) / stats.stddev[0], 1e-12);
  }
}

TEST(ChannelStats, MatchesDirectComputation) {
  const auto c = generate_synthetic_tiny(10, 3);
  std::vector<std::size_t> all(10);
  std::iota(all.begin(), all.end(), 0);
  const auto stats = channel_stats(c, all);
  for (std::size_t ch = 0; ch < 3; ++ch) {
    double sum = 0, sq = 0;
    int n = 0;
    for (std::size_t i = 0; i < 10; ++i) {
      const Tensor img = c.image(i);
      for (std::size_t y = 0; y < 8; ++y)
        for (std::size_t x = 0; x < 8; ++x, ++n) {
          sum += img.at(ch, y, x);
          sq += img.at(ch, y, x) * img.at(ch, y, x);
        }
    }
    const double mean = sum / n;
    EXPECT_NEAR(stats.mean[ch], mean, 1e-12);
    EXPECT_NEAR(stats.stddev[ch], std::sqrt(sq / n - mean * mean), 1e-9);
  }
}
