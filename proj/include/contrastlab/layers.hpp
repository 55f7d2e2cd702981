#pragma once

#include <memory>
#include <string>
#include <vector>

#include "contrastlab/rng.hpp"
#include "contrastlab/tensor.hpp"

namespace contrastlab {

struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}
};

// A differentiable stage. forward() caches what backward() needs; backward()
// accumulates parameter gradients and returns the gradient for the input.
// backward() is only valid after a forward() with training = true.
class Layer {
 public:
  virtual ~Layer() = default;
  virtual Tensor forward(const Tensor& x, bool training) = 0;
  virtual Tensor backward(const Tensor& grad_out) = 0;
  virtual void collect_parameters(std::vector<Parameter*>& /*out*/) {}
  // Non-trainable state saved with checkpoints (normalisation running stats).
  virtual void collect_buffers(std::vector<Tensor*>& /*out*/) {}
};

class Linear final : public Layer {
 public:
  Linear(std::size_t in, std::size_t out, Rng& rng, std::string name = "linear");
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;

  Parameter& weight() { return weight_; }  // (out, in)
  Parameter& bias() { return bias_; }      // (out)

 private:
  std::size_t in_, out_;
  Parameter weight_, bias_;
  Tensor input_;
};

class Relu final : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor input_;
};

// (B, ...) -> (B, prod(...)).
class Flatten final : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor::Shape shape_;
};

// Square-kernel 2-D convolution without bias over (B, C, H, W).
class Conv2d final : public Layer {
 public:
  Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
         std::size_t padding, Rng& rng, std::string name = "conv");
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;

  Parameter& weight() { return weight_; }  // (out, in, k, k)

 private:
  std::size_t in_c_, out_c_, kernel_, stride_, padding_;
  Parameter weight_;
  Tensor input_;
};

// Per-channel batch normalisation over (B, C, H, W).
class BatchNorm2d final : public Layer {
 public:
  explicit BatchNorm2d(std::size_t channels, std::string name = "bn", double momentum = 0.1,
                       double eps = 1e-5);
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_buffers(std::vector<Tensor*>& out) override;

  const Tensor& running_mean() const { return running_mean_; }
  const Tensor& running_var() const { return running_var_; }

 private:
  std::size_t channels_;
  double momentum_, eps_;
  Parameter gamma_, beta_;
  Tensor running_mean_, running_var_;
  Tensor normalized_;
  std::vector<double> inv_std_;
};

// (B, C, H, W) -> (B, C).
class GlobalAvgPool final : public Layer {
 public:
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;

 private:
  Tensor::Shape shape_;
};

class Sequential final : public Layer {
 public:
  Sequential() = default;
  Sequential& add(std::unique_ptr<Layer> layer);
  template <typename L, typename... Args>
  L& emplace(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_buffers(std::vector<Tensor*>& out) override;
  std::size_t size() const noexcept { return layers_.size(); }

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// Two 3x3 conv/BN stages plus an identity or 1x1-projection shortcut.
class BasicBlock final : public Layer {
 public:
  BasicBlock(std::size_t in_channels, std::size_t out_channels, std::size_t stride, Rng& rng,
             const std::string& name);
  Tensor forward(const Tensor& x, bool training) override;
  Tensor backward(const Tensor& grad_out) override;
  void collect_parameters(std::vector<Parameter*>& out) override;
  void collect_buffers(std::vector<Tensor*>& out) override;

 private:
  Sequential main_;
  std::unique_ptr<Sequential> shortcut_;
  Tensor sum_;
};

}  // namespace contrastlab
