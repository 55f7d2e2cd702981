#include "contrastlab/tensor.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "contrastlab/errors.hpp"

namespace contrastlab {

std::size_t element_count(const Tensor::Shape& shape) noexcept {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Tensor::Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != element_count(shape_)) {
    throw InvalidArgument("tensor data size " + std::to_string(data_.size()) +
                          " does not match shape " + shape_string(shape_));
  }
}

std::size_t Tensor::stride0() const noexcept {
  return shape_.empty() || shape_[0] == 0 ? 0 : data_.size() / shape_[0];
}

Tensor Tensor::slice(std::size_t i) const {
  if (shape_.empty() || i >= shape_[0]) {
    throw InvalidArgument("slice index out of range for shape " + shape_string(shape_));
  }
  const std::size_t n = stride0();
  Shape sub(shape_.begin() + 1, shape_.end());
  if (sub.empty()) sub.push_back(1);
  return Tensor(std::move(sub),
                std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(i * n),
                                    data_.begin() + static_cast<std::ptrdiff_t>((i + 1) * n)));
}

void Tensor::set_slice(std::size_t i, const Tensor& value) {
  const std::size_t n = stride0();
  if (shape_.empty() || i >= shape_[0] || value.size() != n) {
    throw InvalidArgument("set_slice: " + shape_string(value.shape()) +
                          " does not fit a slice of " + shape_string(shape_));
  }
  std::copy(value.data_.begin(), value.data_.end(),
            data_.begin() + static_cast<std::ptrdiff_t>(i * n));
}

Tensor Tensor::reshaped(Shape shape) const {
  return Tensor(std::move(shape), data_);
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

}  // namespace contrastlab
