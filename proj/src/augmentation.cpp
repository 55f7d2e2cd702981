#include "contrastlab/augmentation.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <string>

#include "contrastlab/errors.hpp"
#include "contrastlab/rng.hpp"

namespace contrastlab {

namespace {

constexpr double kLumaR = 0.299, kLumaG = 0.587, kLumaB = 0.114;

void require_image(const Tensor& image) {
  if (image.rank() != 3 || image.dim(0) != 3 || image.dim(1) == 0 || image.dim(2) == 0) {
    throw InvalidArgument("expected a (3, H, W) image, got " + shape_string(image.shape()));
  }
}

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

// factor * a + (1 - factor) * b, clamped.
Tensor blend(const Tensor& a, const Tensor& b, double factor) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = clamp01(factor * a[i] + (1.0 - factor) * b[i]);
  return out;
}

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigError(std::string("augmentation.") + name + " must be in [0, 1], got " +
                      std::to_string(p));
  }
}

std::size_t reflect(long long i, std::size_t n) {
  if (n == 1) return 0;
  const auto period = static_cast<long long>(2 * n - 2);
  i %= period;
  if (i < 0) i += period;
  return static_cast<std::size_t>(i < static_cast<long long>(n) ? i : period - i);
}

std::array<double, 3> rgb_to_hsv(double r, double g, double b) {
  const double maxc = std::max({r, g, b});
  const double minc = std::min({r, g, b});
  const double delta = maxc - minc;
  const double v = maxc;
  const double s = maxc > 0.0 ? delta / maxc : 0.0;
  double h = 0.0;
  if (delta > 0.0) {
    if (maxc == r) {
      h = (g - b) / delta;
    } else if (maxc == g) {
      h = 2.0 + (b - r) / delta;
    } else {
      h = 4.0 + (r - g) / delta;
    }
    h /= 6.0;
    h -= std::floor(h);
  }
  return {h, s, v};
}

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  const double h6 = h * 6.0;
  const double sector = std::floor(h6);
  const double f = h6 - sector;
  const double p = v * (1.0 - s);
  const double q = v * (1.0 - s * f);
  const double t = v * (1.0 - s * (1.0 - f));
  switch (static_cast<int>(sector) % 6) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

class Tracer {
 public:
  explicit Tracer(AugmentationTrace* trace) : trace_(trace) {}
  void record(AugmentationStage stage, bool applied) {
    if (trace_) trace_->push_back({stage, applied});
  }

 private:
  AugmentationTrace* trace_;
};

Tensor color_jitter(const Tensor& image, const ColorJitterStrengths& s, Rng& rng) {
  auto factor = [&](double strength) { return rng.uniform(std::max(0.0, 1.0 - strength), 1.0 + strength); };
  // Adjustments run in a random order, each with its own factor.
  std::array<int, 4> order{0, 1, 2, 3};
  rng.shuffle(order.begin(), order.end());
  Tensor out = image;
  for (int op : order) {
    switch (op) {
      case 0:
        if (s.brightness > 0) out = adjust_brightness(out, factor(s.brightness));
        break;
      case 1:
        if (s.contrast > 0) out = adjust_contrast(out, factor(s.contrast));
        break;
      case 2:
        if (s.saturation > 0) out = adjust_saturation(out, factor(s.saturation));
        break;
      default:
        if (s.hue > 0) out = adjust_hue(out, rng.uniform(-s.hue, s.hue));
        break;
    }
  }
  return out;
}

Tensor augment_once(const Tensor& image, const AugmentationConfig& cfg, Rng& rng, Tracer& tracer) {
  const std::size_t side = std::min(image.dim(1), image.dim(2));
  const std::size_t pad = cfg.pad_pixels(side);
  Tensor x = mean_pad(image, static_cast<long long>(pad));
  tracer.record(AugmentationStage::Pad, pad > 0);

  const std::size_t h = x.dim(1), w = x.dim(2);
  if (cfg.crop_size > h || cfg.crop_size > w) {
    throw InvalidArgument("crop_size " + std::to_string(cfg.crop_size) +
                          " exceeds padded image " + shape_string(x.shape()));
  }
  const auto top = static_cast<std::size_t>(rng.below(h - cfg.crop_size + 1));
  const auto left = static_cast<std::size_t>(rng.below(w - cfg.crop_size + 1));
  x = crop(x, top, left, cfg.crop_size);
  tracer.record(AugmentationStage::Crop, true);

  const bool flip = rng.bernoulli(cfg.hflip_prob);
  if (flip) x = horizontal_flip(x);
  tracer.record(AugmentationStage::Flip, flip);

  const bool jitter = rng.bernoulli(cfg.jitter_prob);
  if (jitter) x = color_jitter(x, cfg.jitter, rng);
  tracer.record(AugmentationStage::Jitter, jitter);

  const bool gray = rng.bernoulli(cfg.grayscale_prob);
  if (gray) x = to_grayscale(x);
  tracer.record(AugmentationStage::Grayscale, gray);

  const std::size_t kernel = cfg.blur_kernel_size(cfg.crop_size);
  const double sigma = rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max);
  if (kernel > 1) x = gaussian_blur(x, kernel, sigma);
  tracer.record(AugmentationStage::Blur, kernel > 1);
  return x;
}

}  // namespace

void AugmentationConfig::validate() const {
  if (!(pad_fraction >= 0.0) || !std::isfinite(pad_fraction)) {
    throw ConfigError("augmentation.pad_fraction must be >= 0");
  }
  if (crop_size == 0) throw ConfigError("augmentation.crop_size must be > 0");
  check_probability(hflip_prob, "hflip_prob");
  check_probability(jitter_prob, "jitter_prob");
  check_probability(grayscale_prob, "grayscale_prob");
  if (jitter.brightness < 0 || jitter.contrast < 0 || jitter.saturation < 0 || jitter.hue < 0) {
    throw ConfigError("augmentation.jitter strengths must be >= 0");
  }
  if (jitter.hue > 0.5) throw ConfigError("augmentation.jitter.hue must be <= 0.5");
  if (!(blur_kernel_fraction >= 0.0)) throw ConfigError("augmentation.blur_kernel_fraction must be >= 0");
  if (!(blur_sigma_min > 0.0) || !(blur_sigma_max > 0.0) || blur_sigma_min > blur_sigma_max) {
    throw ConfigError("augmentation.blur_sigma range must satisfy 0 < min <= max");
  }
}

std::size_t AugmentationConfig::pad_pixels(std::size_t side) const {
  return static_cast<std::size_t>(std::lround(pad_fraction * static_cast<double>(side)));
}

std::size_t AugmentationConfig::blur_kernel_size(std::size_t side) const {
  auto k = static_cast<std::size_t>(std::lround(blur_kernel_fraction * static_cast<double>(side)));
  if (k % 2 == 0) ++k;
  return k;
}

std::string_view stage_name(AugmentationStage stage) noexcept {
  switch (stage) {
    case AugmentationStage::Pad: return "pad";
    case AugmentationStage::Crop: return "crop";
    case AugmentationStage::Flip: return "flip";
    case AugmentationStage::Jitter: return "jitter";
    case AugmentationStage::Grayscale: return "grayscale";
    case AugmentationStage::Blur: return "blur";
  }
  return "unknown";
}

ViewPair make_views(const Tensor& image, const AugmentationConfig& cfg, std::uint64_t seed,
                    std::size_t source_index, AugmentationTrace* trace) {
  require_image(image);
  cfg.validate();
  Rng rng(seed);
  Tracer tracer(trace);
  ViewPair views;
  views.view_a = augment_once(image, cfg, rng, tracer);
  views.view_b = augment_once(image, cfg, rng, tracer);
  views.source_index = source_index;
  return views;
}

Tensor mean_pad(const Tensor& image, long long pad) {
  require_image(image);
  if (pad < 0) throw InvalidArgument("mean_pad: negative pad " + std::to_string(pad));
  if (pad == 0) return image;
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const auto p = static_cast<std::size_t>(pad);
  Tensor out({c, h + 2 * p, w + 2 * p});
  for (std::size_t ch = 0; ch < c; ++ch) {
    double sum = 0.0;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) sum += image.at(ch, y, x);
    const double mean = sum / static_cast<double>(h * w);
    for (std::size_t y = 0; y < h + 2 * p; ++y)
      for (std::size_t x = 0; x < w + 2 * p; ++x) out.at(ch, y, x) = mean;
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(ch, y + p, x + p) = image.at(ch, y, x);
  }
  return out;
}

Tensor crop(const Tensor& image, std::size_t top, std::size_t left, std::size_t size) {
  require_image(image);
  if (top + size > image.dim(1) || left + size > image.dim(2)) {
    throw InvalidArgument("crop window outside image " + shape_string(image.shape()));
  }
  Tensor out({image.dim(0), size, size});
  for (std::size_t ch = 0; ch < image.dim(0); ++ch)
    for (std::size_t y = 0; y < size; ++y)
      for (std::size_t x = 0; x < size; ++x) out.at(ch, y, x) = image.at(ch, top + y, left + x);
  return out;
}

Tensor horizontal_flip(const Tensor& image) {
  require_image(image);
  Tensor out(image.shape());
  const std::size_t w = image.dim(2);
  for (std::size_t ch = 0; ch < image.dim(0); ++ch)
    for (std::size_t y = 0; y < image.dim(1); ++y)
      for (std::size_t x = 0; x < w; ++x) out.at(ch, y, x) = image.at(ch, y, w - 1 - x);
  return out;
}

Tensor adjust_brightness(const Tensor& image, double factor) {
  return blend(image, Tensor(image.shape(), 0.0), factor);
}

Tensor adjust_contrast(const Tensor& image, double factor) {
  const Tensor gray = to_grayscale(image);
  double mean = 0.0;
  for (double v : gray.values()) mean += v;
  mean /= static_cast<double>(gray.size());
  return blend(image, Tensor(image.shape(), mean), factor);
}

Tensor adjust_saturation(const Tensor& image, double factor) {
  return blend(image, to_grayscale(image), factor);
}

Tensor adjust_hue(const Tensor& image, double shift) {
  require_image(image);
  Tensor out(image.shape());
  for (std::size_t y = 0; y < image.dim(1); ++y) {
    for (std::size_t x = 0; x < image.dim(2); ++x) {
      auto [h, s, v] = rgb_to_hsv(image.at(0, y, x), image.at(1, y, x), image.at(2, y, x));
      h += shift;
      h -= std::floor(h);
      const auto rgb = hsv_to_rgb(h, s, v);
      for (std::size_t ch = 0; ch < 3; ++ch) out.at(ch, y, x) = clamp01(rgb[ch]);
    }
  }
  return out;
}

Tensor to_grayscale(const Tensor& image) {
  require_image(image);
  Tensor out(image.shape());
  for (std::size_t y = 0; y < image.dim(1); ++y) {
    for (std::size_t x = 0; x < image.dim(2); ++x) {
      const double l = clamp01(kLumaR * image.at(0, y, x) + kLumaG * image.at(1, y, x) +
                               kLumaB * image.at(2, y, x));
      for (std::size_t ch = 0; ch < 3; ++ch) out.at(ch, y, x) = l;
    }
  }
  return out;
}

Tensor gaussian_blur(const Tensor& image, std::size_t kernel_size, double sigma) {
  require_image(image);
  if (kernel_size % 2 == 0) throw InvalidArgument("gaussian_blur: kernel size must be odd");
  if (!(sigma > 0.0)) throw InvalidArgument("gaussian_blur: sigma must be > 0");
  const auto half = static_cast<long long>(kernel_size / 2);
  std::vector<double> kernel(kernel_size);
  double norm = 0.0;
  for (long long i = -half; i <= half; ++i) {
    const double v = std::exp(-static_cast<double>(i * i) / (2.0 * sigma * sigma));
    kernel[static_cast<std::size_t>(i + half)] = v;
    norm += v;
  }
  for (double& v : kernel) v /= norm;

  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor tmp(image.shape()), out(image.shape());
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (long long k = -half; k <= half; ++k) {
          acc += kernel[static_cast<std::size_t>(k + half)] *
                 image.at(ch, y, reflect(static_cast<long long>(x) + k, w));
        }
        tmp.at(ch, y, x) = acc;
      }
    }
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        double acc = 0.0;
        for (long long k = -half; k <= half; ++k) {
          acc += kernel[static_cast<std::size_t>(k + half)] *
                 tmp.at(ch, reflect(static_cast<long long>(y) + k, h), x);
        }
        out.at(ch, y, x) = clamp01(acc);
      }
    }
  }
  return out;
}

}  // namespace contrastlab
