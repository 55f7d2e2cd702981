#pragma once

#include <vector>

#include "contrastlab/layers.hpp"

namespace contrastlab {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Adaptive moment estimation with bias correction; no weight decay.
class Adam {
 public:
  Adam(std::vector<Parameter*> params, AdamConfig cfg);

  void step();
  long long steps() const noexcept { return t_; }
  const AdamConfig& config() const noexcept { return cfg_; }

 private:
  std::vector<Parameter*> params_;
  AdamConfig cfg_;
  std::vector<Tensor> m_, v_;
  long long t_ = 0;
};

}  // namespace contrastlab
