#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "contrastlab/errors.hpp"
#include "contrastlab/loss.hpp"
#include "contrastlab/model.hpp"
#include "contrastlab/optimizer.hpp"
#include "oracles.hpp"

using namespace contrastlab;

namespace {

Tensor random_tensor(Tensor::Shape shape, std::mt19937_64& gen, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Tensor t(std::move(shape));
  for (double& v : t.values()) v = n(gen);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Checks d<probe, layer(x)>/d(x) and d/d(params) against central differences
// on up to `max_entries` coordinates of each.
void expect_layer_gradients(Layer& layer, Tensor x, std::mt19937_64& gen, std::size_t max_entries = 40) {
  const Tensor y0 = layer.forward(x, true);
  const Tensor probe = random_tensor(y0.shape(), gen);
  std::vector<Parameter*> params;
  layer.collect_parameters(params);
  for (Parameter* p : params) p->grad.fill(0.0);
  const Tensor dx = layer.backward(probe);

  const auto objective = [&] { return dot(probe, layer.forward(x, true)); };
  const double h = 1e-5;
  const auto check = [&](std::span<double> values, std::span<const double> analytic, const std::string& what) {
    const std::size_t stride = std::max<std::size_t>(1, values.size() / max_entries);
    for (std::size_t i = 0; i < values.size(); i += stride) {
      const double saved = values[i];
      values[i] = saved + h;
      const double up = objective();
      values[i] = saved - h;
      const double down = objective();
      values[i] = saved;
      const double numeric = (up - down) / (2 * h);
      EXPECT_LT(oracle::relative_error(analytic[i], numeric, 1e-6), 1e-4)
          << what << "[" << i << "] analytic " << analytic[i] << " numeric " << numeric;
    }
  };
  check(x.values(), dx.values(), "input");
  for (Parameter* p : params) check(p->value.values(), p->grad.values(), p->name);
}

}  // namespace

TEST(LayerGradients, Linear) {
  std::mt19937_64 gen(1);
  Rng rng(1);
  Linear layer(5, 3, rng);
  expect_layer_gradients(layer, random_tensor({4, 5}, gen), gen);
}

TEST(LayerGradients, Conv2dStridedAndPadded) {
  std::mt19937_64 gen(2);
  Rng rng(2);
  Conv2d layer(2, 3, 3, 2, 1, rng);
  expect_layer_gradients(layer, random_tensor({2, 2, 5, 5}, gen), gen);
  Conv2d pointwise(3, 2, 1, 1, 0, rng);
  expect_layer_gradients(pointwise, random_tensor({2, 3, 3, 3}, gen), gen);
}

TEST(LayerGradients, BatchNormTraining) {
  std::mt19937_64 gen(3);
  BatchNorm2d layer(3);
  expect_layer_gradients(layer, random_tensor({4, 3, 2, 2}, gen), gen);
}

TEST(LayerGradients, BasicBlockWithProjectionShortcut) {
  std::mt19937_64 gen(4);
  Rng rng(4);
  BasicBlock block(2, 4, 2, rng, "block");
  expect_layer_gradients(block, random_tensor({3, 2, 4, 4}, gen), gen, 20);
}

TEST(LayerGradients, PoolAndFlatten) {
  std::mt19937_64 gen(5);
  GlobalAvgPool pool;
  expect_layer_gradients(pool, random_tensor({2, 3, 3, 3}, gen), gen);
  Flatten flat;
  expect_layer_gradients(flat, random_tensor({2, 3, 2, 2}, gen), gen);
}

TEST(BatchNorm, EvalModeUsesRunningStatistics) {
  std::mt19937_64 gen(6);
  BatchNorm2d bn(2, "bn", 1.0);  // momentum 1 copies the last batch statistics
  const Tensor x = random_tensor({8, 2, 3, 3}, gen, 2.0);
  bn.forward(x, true);
  const Tensor one = x.slice(0).reshaped({1, 2, 3, 3});
  const Tensor y = bn.forward(one, false);
  const double expected = (one[0] - bn.running_mean()[0]) / std::sqrt(bn.running_var()[0] + 1e-5);
  EXPECT_NEAR(y[0], expected, 1e-12);
}

TEST(Model, TinyMlpShapes) {
  Model model(ModelSpec::tiny_mlp(), 7);
  std::mt19937_64 gen(7);
  for (std::size_t b : {1u, 2u, 16u}) {
    const Tensor x = random_tensor({b, 3, 8, 8}, gen);
    const Tensor h = model.encode(x, false);
    EXPECT_EQ(h.shape(), (Tensor::Shape{b, 64}));
    EXPECT_EQ(model.project(h, false).shape(), (Tensor::Shape{b, 16}));
  }
}

TEST(Model, ShapeMismatchIsInvalidArgument) {
  Model model(ModelSpec::tiny_mlp(), 8);
  EXPECT_THROW(model.encode(Tensor({2, 3, 32, 32}), false), InvalidArgument);
  EXPECT_THROW(model.encode(Tensor({2, 1, 8, 8}), false), InvalidArgument);
  EXPECT_THROW(model.project(Tensor({2, 63}), false), InvalidArgument);
}

TEST(Model, SpecValidation) {
  ModelSpec spec = ModelSpec::tiny_mlp();
  spec.projection_output_dim = 1;
  EXPECT_THROW(Model(spec, 0), ConfigError);
  spec = ModelSpec::resnet18_cifar();
  spec.backbone_output_dim = 256;
  EXPECT_THROW(Model(spec, 0), ConfigError);
}

TEST(Model, EvalModeIsDeterministicAndRowWise) {
  Model model(ModelSpec::tiny_mlp(), 9);
  std::mt19937_64 gen(9);
  Tensor x = random_tensor({4, 3, 8, 8}, gen);
  x.set_slice(3, x.slice(1));
  const Tensor z1 = model.forward(x, false);
  const Tensor z2 = model.forward(x, false);
  EXPECT_EQ(z1, z2);
  EXPECT_EQ(z1.slice(1), z1.slice(3));
}

TEST(Model, FiniteOutputsOnRandomInputs) {
  Model model(ModelSpec::tiny_mlp(), 10);
  std::mt19937_64 gen(10);
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor z = model.forward(random_tensor({2, 3, 8, 8}, gen, 3.0), false);
    for (double v : z.values()) ASSERT_TRUE(std::isfinite(v));
  }
}

TEST(Model, ZeroHeadIsRejectedByLossGuard) {
  Model model(ModelSpec::tiny_mlp(), 11);
  for (Parameter* p : model.parameters()) {
    if (p->name.starts_with("head.fc2")) p->value.fill(0.0);
  }
  std::mt19937_64 gen(11);
  const Tensor z = model.forward(random_tensor({4, 3, 8, 8}, gen), false);
  Matrix m = Eigen::Map<const Matrix>(z.data(), 4, 16);
  EXPECT_THROW(EmbeddingBatch{m}, InvalidArgument);
}

TEST(Model, EndToEndGradientReachesEveryTinyParameter) {
  Model model(ModelSpec::tiny_mlp(), 12);
  std::mt19937_64 gen(12);
  const Tensor x = random_tensor({8, 3, 8, 8}, gen);
  const Tensor z = model.forward(x, true);
  const EmbeddingBatch batch(Eigen::Map<const Matrix>(z.data(), 8, 16));
  const auto lg = ntxent_loss_with_gradient(batch, LossConfig{0.5});
  Tensor grad_z({8, 16}, std::vector<double>(lg.gradient.data(), lg.gradient.data() + lg.gradient.size()));
  model.zero_grad();
  model.backward(grad_z);
  for (Parameter* p : model.parameters()) {
    double norm = 0;
    for (double g : p->grad.values()) {
      ASSERT_TRUE(std::isfinite(g)) << p->name;
      norm += g * g;
    }
    EXPECT_GT(norm, 0.0) << p->name;
  }

  // And it is the gradient of the loss: compare one weight against finite differences.
  Parameter* w = model.parameters().front();
  const auto loss_at = [&] {
    const Tensor zz = model.forward(x, true);
    return ntxent_batch_loss(EmbeddingBatch(Eigen::Map<const Matrix>(zz.data(), 8, 16)), LossConfig{0.5});
  };
  for (std::size_t i : {0u, 17u, 333u}) {
    const double saved = w->value[i];
    w->value[i] = saved + 1e-5;
    const double up = loss_at();
    w->value[i] = saved - 1e-5;
    const double down = loss_at();
    w->value[i] = saved;
    EXPECT_LT(oracle::relative_error(w->grad[i], (up - down) / 2e-5, 1e-8), 1e-4);
  }
}

TEST(Model, Resnet18CifarShapes) {
  Model model(ModelSpec::resnet18_cifar(), 13);
  EXPECT_GT(model.parameter_count(), 11'000'000u);
  std::mt19937_64 gen(13);
  const Tensor x = random_tensor({2, 3, 32, 32}, gen);
  const Tensor h = model.encode(x, true);
  EXPECT_EQ(h.shape(), (Tensor::Shape{2, 512}));
  const Tensor z = model.project(h, true);
  EXPECT_EQ(z.shape(), (Tensor::Shape{2, 128}));
  model.zero_grad();
  model.backward(random_tensor({2, 128}, gen));
  for (double v : model.forward(x, false).values()) ASSERT_TRUE(std::isfinite(v));
}

TEST(Adam, ZeroLearningRateLeavesParametersBitwiseUnchanged) {
  Rng rng(14);
  Linear layer(3, 2, rng);
  std::vector<Parameter*> params;
  layer.collect_parameters(params);
  const Tensor before = params[0]->value;
  for (double& g : params[0]->grad.values()) g = 0.3;
  Adam adam(params, AdamConfig{0.0});
  adam.step();
  EXPECT_EQ(params[0]->value, before);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  Rng rng(15);
  Linear layer(2, 1, rng);
  std::vector<Parameter*> params;
  layer.collect_parameters(params);
  const double w0 = params[0]->value[0];
  params[0]->grad[0] = 5.0;
  Adam adam(params, AdamConfig{1e-3});
  adam.step();
  // Bias-corrected first step is lr * g / (|g| + eps).
  EXPECT_NEAR(params[0]->value[0], w0 - 1e-3 * 5.0 / (5.0 + 1e-8), 1e-15);
}
