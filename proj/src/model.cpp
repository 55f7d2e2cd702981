#include "contrastlab/model.hpp"

#include "contrastlab/errors.hpp"

namespace contrastlab {

std::string_view backbone_name(Backbone b) noexcept {
  return b == Backbone::Resnet18Cifar ? "resnet18-cifar" : "tiny-mlp";
}

Backbone parse_backbone(std::string_view name) {
  if (name == "resnet18-cifar") return Backbone::Resnet18Cifar;
  if (name == "tiny-mlp") return Backbone::TinyMlp;
  throw ConfigError("model.backbone must be resnet18-cifar or tiny-mlp, got '" + std::string(name) + "'");
}

ModelSpec ModelSpec::resnet18_cifar() { return ModelSpec{}; }

ModelSpec ModelSpec::tiny_mlp() {
  ModelSpec spec;
  spec.backbone = Backbone::TinyMlp;
  spec.backbone_output_dim = 64;
  spec.projection_hidden_dim = 64;
  spec.projection_output_dim = 16;
  spec.input_size = 8;
  return spec;
}

void ModelSpec::validate() const {
  if (projection_output_dim < 2) throw ConfigError("model.projection_output_dim must be >= 2");
  if (projection_hidden_dim == 0) throw ConfigError("model.projection_hidden_dim must be > 0");
  if (backbone_output_dim == 0) throw ConfigError("model.backbone_output_dim must be > 0");
  if (input_size == 0) throw ConfigError("model.input_size must be > 0");
  if (backbone == Backbone::Resnet18Cifar) {
    if (backbone_output_dim != 512) {
      throw ConfigError("model.backbone_output_dim must be 512 for resnet18-cifar");
    }
    if (input_size < 8) throw ConfigError("model.input_size must be >= 8 for resnet18-cifar");
  }
}

Model::Model(const ModelSpec& spec, std::uint64_t seed) : spec_(spec) {
  spec_.validate();
  Rng rng(seed);
  if (spec_.backbone == Backbone::TinyMlp) {
    backbone_.emplace<Flatten>();
    backbone_.emplace<Linear>(3 * spec_.input_size * spec_.input_size, spec_.backbone_output_dim, rng,
                              "backbone.fc");
    backbone_.emplace<Relu>();
  } else {
    backbone_.emplace<Conv2d>(3, 64, 3, 1, 1, rng, "backbone.stem.conv");
    backbone_.emplace<BatchNorm2d>(64, "backbone.stem.bn");
    backbone_.emplace<Relu>();
    std::size_t channels = 64;
    const std::size_t widths[] = {64, 128, 256, 512};
    for (std::size_t stage = 0; stage < 4; ++stage) {
      const std::size_t width = widths[stage];
      for (std::size_t block = 0; block < 2; ++block) {
        const std::size_t stride = (stage > 0 && block == 0) ? 2 : 1;
        backbone_.emplace<BasicBlock>(channels, width, stride, rng,
                                      "backbone.layer" + std::to_string(stage + 1) + "." + std::to_string(block));
        channels = width;
      }
    }
    backbone_.emplace<GlobalAvgPool>();
  }
  head_.emplace<Linear>(spec_.backbone_output_dim, spec_.projection_hidden_dim, rng, "head.fc1");
  head_.emplace<Relu>();
  head_.emplace<Linear>(spec_.projection_hidden_dim, spec_.projection_output_dim, rng, "head.fc2");
}

Tensor Model::encode(const Tensor& images, bool training) {
  const std::size_t s = spec_.input_size;
  if (images.rank() != 4 || images.dim(0) == 0 || images.dim(1) != 3 || images.dim(2) != s || images.dim(3) != s) {
    throw InvalidArgument("encode: expected (B, 3, " + std::to_string(s) + ", " + std::to_string(s) +
                          ") images, got " + shape_string(images.shape()));
  }
  return backbone_.forward(images, training);
}

Tensor Model::project(const Tensor& h, bool training) {
  if (h.rank() != 2 || h.dim(0) == 0 || h.dim(1) != spec_.backbone_output_dim) {
    throw InvalidArgument("project: expected (B, " + std::to_string(spec_.backbone_output_dim) +
                          ") features, got " + shape_string(h.shape()));
  }
  return head_.forward(h, training);
}

void Model::backward(const Tensor& grad_z) { backbone_.backward(head_.backward(grad_z)); }

void Model::zero_grad() {
  for (Parameter* p : parameters()) p->grad.fill(0.0);
}

std::vector<Parameter*> Model::parameters() {
  std::vector<Parameter*> out;
  backbone_.collect_parameters(out);
  head_.collect_parameters(out);
  return out;
}

std::vector<Tensor*> Model::buffers() {
  std::vector<Tensor*> out;
  backbone_.collect_buffers(out);
  head_.collect_buffers(out);
  return out;
}

std::size_t Model::parameter_count() {
  std::size_t n = 0;
  for (Parameter* p : parameters()) n += p->value.size();
  return n;
}

}  // namespace contrastlab
