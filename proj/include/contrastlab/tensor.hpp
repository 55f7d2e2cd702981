#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace contrastlab {

// Dense row-major array of doubles. Images are (C, H, W), image batches
// (B, C, H, W), feature batches (B, D).
class Tensor {
 public:
  using Shape = std::vector<std::size_t>;

  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }
  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  // (C, H, W) indexing for rank-3 tensors.
  double& at(std::size_t c, std::size_t y, std::size_t x) noexcept {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const noexcept {
    return data_[(c * shape_[1] + y) * shape_[2] + x];
  }

  // Elements per leading-axis slice.
  std::size_t stride0() const noexcept;

  // Copy of slice i along the leading axis.
  Tensor slice(std::size_t i) const;
  void set_slice(std::size_t i, const Tensor& value);

  // Same data, new shape; element count must match.
  Tensor reshaped(Shape shape) const;

  void fill(double value);

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

std::size_t element_count(const Tensor::Shape& shape) noexcept;
std::string shape_string(const Tensor::Shape& shape);

}  // namespace contrastlab
