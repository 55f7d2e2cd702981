#include "contrastlab/layers.hpp"

#include <Eigen/Dense>
#include <cmath>

#include "contrastlab/errors.hpp"

namespace contrastlab {

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;

void require_rank(const Tensor& x, std::size_t rank, const char* who) {
  if (x.rank() != rank) {
    throw InvalidArgument(std::string(who) + ": expected rank " + std::to_string(rank) + " input, got " +
                          shape_string(x.shape()));
  }
}

Tensor uniform_tensor(Tensor::Shape shape, double bound, Rng& rng) {
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

std::size_t conv_out(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  return (in + 2 * padding - kernel) / stride + 1;
}

// Column buffer (C * k * k, Ho * Wo) for one image starting at `img`.
void im2col(const double* img, std::size_t c, std::size_t h, std::size_t w, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo, double* col) {
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* row = col + ((ch * k + ky) * k + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long long iy = static_cast<long long>(oy * stride + ky) - static_cast<long long>(pad);
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long long ix = static_cast<long long>(ox * stride + kx) - static_cast<long long>(pad);
            const bool inside = iy >= 0 && ix >= 0 && iy < static_cast<long long>(h) &&
                                ix < static_cast<long long>(w);
            row[oy * wo + ox] = inside ? img[(ch * h + static_cast<std::size_t>(iy)) * w +
                                             static_cast<std::size_t>(ix)]
                                       : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* col, std::size_t c, std::size_t h, std::size_t w, std::size_t k,
            std::size_t stride, std::size_t pad, std::size_t ho, std::size_t wo, double* img) {
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* row = col + ((ch * k + ky) * k + kx) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long long iy = static_cast<long long>(oy * stride + ky) - static_cast<long long>(pad);
          if (iy < 0 || iy >= static_cast<long long>(h)) continue;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const long long ix = static_cast<long long>(ox * stride + kx) - static_cast<long long>(pad);
            if (ix < 0 || ix >= static_cast<long long>(w)) continue;
            img[(ch * h + static_cast<std::size_t>(iy)) * w + static_cast<std::size_t>(ix)] += row[oy * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------- Linear

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, std::string name)
    : in_(in),
      out_(out),
      weight_(name + ".weight", uniform_tensor({out, in}, 1.0 / std::sqrt(static_cast<double>(in)), rng)),
      bias_(name + ".bias", uniform_tensor({out}, 1.0 / std::sqrt(static_cast<double>(in)), rng)) {}

Tensor Linear::forward(const Tensor& x, bool training) {
  require_rank(x, 2, "Linear");
  if (x.dim(1) != in_) {
    throw InvalidArgument("Linear: expected " + std::to_string(in_) + " features, got " +
                          shape_string(x.shape()));
  }
  const auto batch = static_cast<Eigen::Index>(x.dim(0));
  Tensor y({x.dim(0), out_});
  MatrixMap ym(y.data(), batch, static_cast<Eigen::Index>(out_));
  ym.noalias() = ConstMatrixMap(x.data(), batch, static_cast<Eigen::Index>(in_)) *
                 ConstMatrixMap(weight_.value.data(), static_cast<Eigen::Index>(out_),
                                static_cast<Eigen::Index>(in_))
                     .transpose();
  ym.rowwise() += Eigen::Map<const Eigen::RowVectorXd>(bias_.value.data(), static_cast<Eigen::Index>(out_));
  if (training) input_ = x;
  return y;
}

Tensor Linear::backward(const Tensor& grad_out) {
  const auto batch = static_cast<Eigen::Index>(input_.dim(0));
  const auto in = static_cast<Eigen::Index>(in_), out = static_cast<Eigen::Index>(out_);
  ConstMatrixMap g(grad_out.data(), batch, out);
  ConstMatrixMap x(input_.data(), batch, in);
  MatrixMap(weight_.grad.data(), out, in).noalias() += g.transpose() * x;
  Eigen::Map<Eigen::RowVectorXd>(bias_.grad.data(), out) += g.colwise().sum();
  Tensor dx(input_.shape());
  MatrixMap(dx.data(), batch, in).noalias() = g * ConstMatrixMap(weight_.value.data(), out, in);
  return dx;
}

void Linear::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&weight_);
  out.push_back(&bias_);
}

// ---------------------------------------------------------------- Relu

Tensor Relu::forward(const Tensor& x, bool training) {
  Tensor y = x;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  if (training) input_ = x;
  return y;
}

Tensor Relu::backward(const Tensor& grad_out) {
  Tensor dx = grad_out;
  for (std::size_t i = 0; i < dx.size(); ++i) {
    if (!(input_[i] > 0.0)) dx[i] = 0.0;
  }
  return dx;
}

// ---------------------------------------------------------------- Flatten

Tensor Flatten::forward(const Tensor& x, bool /*training*/) {
  if (x.rank() < 1) throw InvalidArgument("Flatten: empty shape");
  shape_ = x.shape();
  return x.reshaped({x.dim(0), x.stride0()});
}

Tensor Flatten::backward(const Tensor& grad_out) { return grad_out.reshaped(shape_); }

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kernel, std::size_t stride,
               std::size_t padding, Rng& rng, std::string name)
    : in_c_(in_channels),
      out_c_(out_channels),
      kernel_(kernel),
      stride_(stride),
      padding_(padding),
      weight_(name + ".weight", Tensor({out_channels, in_channels, kernel, kernel})) {
  // He initialisation over fan-out, as is usual for ReLU residual networks.
  const double std = std::sqrt(2.0 / static_cast<double>(out_channels * kernel * kernel));
  for (double& v : weight_.value.values()) v = std * rng.normal();
}

Tensor Conv2d::forward(const Tensor& x, bool training) {
  require_rank(x, 4, "Conv2d");
  if (x.dim(1) != in_c_) {
    throw InvalidArgument("Conv2d: expected " + std::to_string(in_c_) + " channels, got " +
                          shape_string(x.shape()));
  }
  const std::size_t b = x.dim(0), h = x.dim(2), w = x.dim(3);
  if (h + 2 * padding_ < kernel_ || w + 2 * padding_ < kernel_) {
    throw InvalidArgument("Conv2d: input " + shape_string(x.shape()) + " smaller than kernel");
  }
  const std::size_t ho = conv_out(h, kernel_, stride_, padding_), wo = conv_out(w, kernel_, stride_, padding_);
  const std::size_t rows = in_c_ * kernel_ * kernel_, cols = ho * wo;
  Tensor y({b, out_c_, ho, wo});
  std::vector<double> col(rows * cols);
  ConstMatrixMap wm(weight_.value.data(), static_cast<Eigen::Index>(out_c_), static_cast<Eigen::Index>(rows));
  for (std::size_t n = 0; n < b; ++n) {
    im2col(x.data() + n * x.stride0(), in_c_, h, w, kernel_, stride_, padding_, ho, wo, col.data());
    MatrixMap(y.data() + n * y.stride0(), static_cast<Eigen::Index>(out_c_), static_cast<Eigen::Index>(cols))
        .noalias() = wm * ConstMatrixMap(col.data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  }
  if (training) input_ = x;
  return y;
}

Tensor Conv2d::backward(const Tensor& grad_out) {
  const std::size_t b = input_.dim(0), h = input_.dim(2), w = input_.dim(3);
  const std::size_t ho = grad_out.dim(2), wo = grad_out.dim(3);
  const auto rows = static_cast<Eigen::Index>(in_c_ * kernel_ * kernel_);
  const auto cols = static_cast<Eigen::Index>(ho * wo);
  const auto oc = static_cast<Eigen::Index>(out_c_);
  ConstMatrixMap wm(weight_.value.data(), oc, rows);
  MatrixMap dw(weight_.grad.data(), oc, rows);
  Tensor dx(input_.shape());
  std::vector<double> col(static_cast<std::size_t>(rows * cols)), dcol(col.size());
  for (std::size_t n = 0; n < b; ++n) {
    im2col(input_.data() + n * input_.stride0(), in_c_, h, w, kernel_, stride_, padding_, ho, wo, col.data());
    ConstMatrixMap g(grad_out.data() + n * grad_out.stride0(), oc, cols);
    dw.noalias() += g * ConstMatrixMap(col.data(), rows, cols).transpose();
    MatrixMap(dcol.data(), rows, cols).noalias() = wm.transpose() * g;
    col2im(dcol.data(), in_c_, h, w, kernel_, stride_, padding_, ho, wo, dx.data() + n * dx.stride0());
  }
  return dx;
}

void Conv2d::collect_parameters(std::vector<Parameter*>& out) { out.push_back(&weight_); }

// ---------------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(std::size_t channels, std::string name, double momentum, double eps)
    : channels_(channels),
      momentum_(momentum),
      eps_(eps),
      gamma_(name + ".weight", Tensor({channels}, 1.0)),
      beta_(name + ".bias", Tensor({channels}, 0.0)),
      running_mean_({channels}, 0.0),
      running_var_({channels}, 1.0) {}

Tensor BatchNorm2d::forward(const Tensor& x, bool training) {
  require_rank(x, 4, "BatchNorm2d");
  if (x.dim(1) != channels_) throw InvalidArgument("BatchNorm2d: channel mismatch " + shape_string(x.shape()));
  const std::size_t b = x.dim(0), plane = x.dim(2) * x.dim(3);
  const double count = static_cast<double>(b * plane);
  Tensor y(x.shape());
  if (training) {
    normalized_ = Tensor(x.shape());
    inv_std_.assign(channels_, 0.0);
  }
  for (std::size_t c = 0; c < channels_; ++c) {
    double mean, var;
    if (training) {
      double sum = 0.0;
      for (std::size_t n = 0; n < b; ++n)
        for (std::size_t k = 0; k < plane; ++k) sum += x[(n * channels_ + c) * plane + k];
      mean = sum / count;
      double sq = 0.0;
      for (std::size_t n = 0; n < b; ++n)
        for (std::size_t k = 0; k < plane; ++k) {
          const double d = x[(n * channels_ + c) * plane + k] - mean;
          sq += d * d;
        }
      var = sq / count;
      const double unbiased = count > 1 ? sq / (count - 1) : var;
      running_mean_[c] = (1 - momentum_) * running_mean_[c] + momentum_ * mean;
      running_var_[c] = (1 - momentum_) * running_var_[c] + momentum_ * unbiased;
    } else {
      mean = running_mean_[c];
      var = running_var_[c];
    }
    const double inv_std = 1.0 / std::sqrt(var + eps_);
    if (training) inv_std_[c] = inv_std;
    for (std::size_t n = 0; n < b; ++n) {
      for (std::size_t k = 0; k < plane; ++k) {
        const std::size_t i = (n * channels_ + c) * plane + k;
        const double xhat = (x[i] - mean) * inv_std;
        if (training) normalized_[i] = xhat;
        y[i] = gamma_.value[c] * xhat + beta_.value[c];
      }
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& grad_out) {
  const std::size_t b = grad_out.dim(0), plane = grad_out.dim(2) * grad_out.dim(3);
  const double count = static_cast<double>(b * plane);
  Tensor dx(grad_out.shape());
  for (std::size_t c = 0; c < channels_; ++c) {
    double sum_g = 0.0, sum_gx = 0.0;
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t k = 0; k < plane; ++k) {
        const std::size_t i = (n * channels_ + c) * plane + k;
        sum_g += grad_out[i];
        sum_gx += grad_out[i] * normalized_[i];
      }
    gamma_.grad[c] += sum_gx;
    beta_.grad[c] += sum_g;
    const double scale = gamma_.value[c] * inv_std_[c] / count;
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t k = 0; k < plane; ++k) {
        const std::size_t i = (n * channels_ + c) * plane + k;
        dx[i] = scale * (count * grad_out[i] - sum_g - normalized_[i] * sum_gx);
      }
  }
  return dx;
}

void BatchNorm2d::collect_parameters(std::vector<Parameter*>& out) {
  out.push_back(&gamma_);
  out.push_back(&beta_);
}

void BatchNorm2d::collect_buffers(std::vector<Tensor*>& out) {
  out.push_back(&running_mean_);
  out.push_back(&running_var_);
}

// ---------------------------------------------------------------- GlobalAvgPool

Tensor GlobalAvgPool::forward(const Tensor& x, bool /*training*/) {
  require_rank(x, 4, "GlobalAvgPool");
  shape_ = x.shape();
  const std::size_t b = x.dim(0), c = x.dim(1), plane = x.dim(2) * x.dim(3);
  Tensor y({b, c});
  for (std::size_t i = 0; i < b * c; ++i) {
    double sum = 0.0;
    for (std::size_t k = 0; k < plane; ++k) sum += x[i * plane + k];
    y[i] = sum / static_cast<double>(plane);
  }
  return y;
}

Tensor GlobalAvgPool::backward(const Tensor& grad_out) {
  Tensor dx(shape_);
  const std::size_t plane = shape_[2] * shape_[3];
  for (std::size_t i = 0; i < grad_out.size(); ++i) {
    const double g = grad_out[i] / static_cast<double>(plane);
    for (std::size_t k = 0; k < plane; ++k) dx[i * plane + k] = g;
  }
  return dx;
}

// ---------------------------------------------------------------- Sequential

Sequential& Sequential::add(std::unique_ptr<Layer> layer) {
  layers_.push_back(std::move(layer));
  return *this;
}

Tensor Sequential::forward(const Tensor& x, bool training) {
  Tensor y = x;
  for (auto& layer : layers_) y = layer->forward(y, training);
  return y;
}

Tensor Sequential::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

void Sequential::collect_parameters(std::vector<Parameter*>& out) {
  for (auto& layer : layers_) layer->collect_parameters(out);
}

void Sequential::collect_buffers(std::vector<Tensor*>& out) {
  for (auto& layer : layers_) layer->collect_buffers(out);
}

// ---------------------------------------------------------------- BasicBlock

BasicBlock::BasicBlock(std::size_t in_channels, std::size_t out_channels, std::size_t stride, Rng& rng,
                       const std::string& name) {
  main_.emplace<Conv2d>(in_channels, out_channels, 3, stride, 1, rng, name + ".conv1");
  main_.emplace<BatchNorm2d>(out_channels, name + ".bn1");
  main_.emplace<Relu>();
  main_.emplace<Conv2d>(out_channels, out_channels, 3, 1, 1, rng, name + ".conv2");
  main_.emplace<BatchNorm2d>(out_channels, name + ".bn2");
  if (stride != 1 || in_channels != out_channels) {
    shortcut_ = std::make_unique<Sequential>();
    shortcut_->emplace<Conv2d>(in_channels, out_channels, 1, stride, 0, rng, name + ".shortcut.conv");
    shortcut_->emplace<BatchNorm2d>(out_channels, name + ".shortcut.bn");
  }
}

Tensor BasicBlock::forward(const Tensor& x, bool training) {
  Tensor y = main_.forward(x, training);
  const Tensor skip = shortcut_ ? shortcut_->forward(x, training) : x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += skip[i];
  if (training) sum_ = y;
  for (double& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor BasicBlock::backward(const Tensor& grad_out) {
  Tensor g = grad_out;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (!(sum_[i] > 0.0)) g[i] = 0.0;
  }
  Tensor dx = main_.backward(g);
  const Tensor dskip = shortcut_ ? shortcut_->backward(g) : g;
  for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dskip[i];
  return dx;
}

void BasicBlock::collect_parameters(std::vector<Parameter*>& out) {
  main_.collect_parameters(out);
  if (shortcut_) shortcut_->collect_parameters(out);
}

void BasicBlock::collect_buffers(std::vector<Tensor*>& out) {
  main_.collect_buffers(out);
  if (shortcut_) shortcut_->collect_buffers(out);
}

}  // namespace contrastlab
