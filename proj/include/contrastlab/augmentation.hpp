#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

#include "contrastlab/tensor.hpp"

namespace contrastlab {

struct ColorJitterStrengths {
  double brightness = 0.4;
  double contrast = 0.4;
  double saturation = 0.4;
  double hue = 0.1;
};

// Knobs of the two-view augmentation chain. Images are (3, H, W) with
// values in [0, 1]; every stage keeps them in that range.
struct AugmentationConfig {
  double pad_fraction = 0.125;
  std::size_t crop_size = 32;
  double hflip_prob = 0.5;
  ColorJitterStrengths jitter;
  double jitter_prob = 0.8;
  double grayscale_prob = 0.2;
  double blur_kernel_fraction = 0.1;
  double blur_sigma_min = 0.1;
  double blur_sigma_max = 2.0;

  void validate() const;

  // Pixels of mean padding for an image whose shorter side is `side`.
  std::size_t pad_pixels(std::size_t side) const;
  // Odd blur kernel width for a crop of side `side`; 1 means no blur.
  std::size_t blur_kernel_size(std::size_t side) const;
};

enum class AugmentationStage { Pad, Crop, Flip, Jitter, Grayscale, Blur };

std::string_view stage_name(AugmentationStage stage) noexcept;

struct StageRecord {
  AugmentationStage stage;
  bool applied;
};

// Optional observer filled by make_views: the stage sequence of view_a
// followed by that of view_b.
using AugmentationTrace = std::vector<StageRecord>;

struct ViewPair {
  Tensor view_a;
  Tensor view_b;
  std::size_t source_index = 0;
};

// Two independent augmented views of `image` drawn from one generator seeded
// with `seed`. Pure: identical arguments give bit-identical views.
ViewPair make_views(const Tensor& image, const AugmentationConfig& cfg, std::uint64_t seed,
                    std::size_t source_index = 0, AugmentationTrace* trace = nullptr);

// Grow each spatial side by `pad` pixels on both ends, filling with the
// per-channel mean of the input.
Tensor mean_pad(const Tensor& image, long long pad);

// Individual stages, exposed for testing.
Tensor crop(const Tensor& image, std::size_t top, std::size_t left, std::size_t size);
Tensor horizontal_flip(const Tensor& image);
Tensor adjust_brightness(const Tensor& image, double factor);
Tensor adjust_contrast(const Tensor& image, double factor);
Tensor adjust_saturation(const Tensor& image, double factor);
Tensor adjust_hue(const Tensor& image, double shift);
Tensor to_grayscale(const Tensor& image);
Tensor gaussian_blur(const Tensor& image, std::size_t kernel_size, double sigma);

}  // namespace contrastlab
