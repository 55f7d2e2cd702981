#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "contrastlab/layers.hpp"

namespace contrastlab {

enum class Backbone { Resnet18Cifar, TinyMlp };

std::string_view backbone_name(Backbone b) noexcept;
Backbone parse_backbone(std::string_view name);

struct ModelSpec {
  Backbone backbone = Backbone::Resnet18Cifar;
  std::size_t backbone_output_dim = 512;   // dimension of h
  std::size_t projection_hidden_dim = 512;
  std::size_t projection_output_dim = 128;  // dimension of z
  std::size_t input_size = 32;              // spatial side of the (3, S, S) input

  static ModelSpec resnet18_cifar();
  static ModelSpec tiny_mlp();

  void validate() const;
};

// Backbone f and projection head g: h = f(x), z = g(h).
//
// resnet18-cifar: 3x3 stem convolution without max-pool, four stages of two
// basic blocks (64, 128, 256, 512 channels), global average pool.
// tiny-mlp: flatten, one hidden layer of backbone_output_dim units, ReLU.
// The head is Linear -> ReLU -> Linear for both.
class Model {
 public:
  Model(const ModelSpec& spec, std::uint64_t seed);

  const ModelSpec& spec() const noexcept { return spec_; }

  // (B, 3, S, S) -> (B, backbone_output_dim).
  Tensor encode(const Tensor& images, bool training);
  // (B, backbone_output_dim) -> (B, projection_output_dim); not normalised.
  Tensor project(const Tensor& h, bool training);
  Tensor forward(const Tensor& images, bool training) { return project(encode(images, training), training); }

  // Gradient of a scalar with respect to z, after forward(..., true).
  // Accumulates into every parameter's grad.
  void backward(const Tensor& grad_z);

  void zero_grad();
  std::vector<Parameter*> parameters();
  std::vector<Tensor*> buffers();
  std::size_t parameter_count();

 private:
  ModelSpec spec_;
  Sequential backbone_;
  Sequential head_;
};

}  // namespace contrastlab
