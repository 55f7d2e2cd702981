#include "contrastlab/optimizer.hpp"

#include <cmath>

namespace contrastlab {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  for (const Parameter* p : params_) {
    m_.emplace_back(p->value.shape());
    v_.emplace_back(p->value.shape());
  }
}

void Adam::step() {
  ++t_;
  const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    Parameter& p = *params_[k];
    Tensor& m = m_[k];
    Tensor& v = v_[k];
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
      p.value[i] -= cfg_.learning_rate * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg_.eps);
    }
  }
}

}  // namespace contrastlab
