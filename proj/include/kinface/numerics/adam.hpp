#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "kinface/numerics/autograd.hpp"

namespace kinface {

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const {
    if (!(learning_rate > 0.0)) throw std::invalid_argument("adam: learning_rate must be positive");
    if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("adam: beta1 must lie in [0, 1)");
    if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("adam: beta2 must lie in [0, 1)");
    if (!(epsilon > 0.0)) throw std::invalid_argument("adam: epsilon must be positive");
  }
};

template <Real T>
struct AdamState {
  Tensor<T> first_moment;
  Tensor<T> second_moment;
  std::uint64_t step_count = 0;
  AdamConfig config;

  AdamState() = default;
  AdamState(const Shape& shape, AdamConfig cfg)
      : first_moment(shape), second_moment(shape), config(cfg) {
    config.validate();
  }
};

/// One bias-corrected Adam update of `param` from its current gradient.
template <Real T>
void adam_step(Parameter<T>& param, AdamState<T>& state) {
  const auto& grad = param.gradient();
  auto& value = param.value();
  if (state.first_moment.shape() != value.shape() || state.second_moment.shape() != value.shape()) {
    throw ShapeError("adam: state shape does not match parameter " + param.name());
  }
  if (!grad.all_finite()) throw NumericError("adam: non-finite gradient for " + param.name());

  const auto& c = state.config;
  ++state.step_count;
  const double t = static_cast<double>(state.step_count);
  const double correction1 = 1.0 - std::pow(c.beta1, t);
  const double correction2 = 1.0 - std::pow(c.beta2, t);
  for (std::size_t i = 0; i < value.size(); ++i) {
    const double g = grad[i];
    const double m = c.beta1 * state.first_moment[i] + (1.0 - c.beta1) * g;
    const double v = c.beta2 * state.second_moment[i] + (1.0 - c.beta2) * g * g;
    state.first_moment[i] = static_cast<T>(m);
    state.second_moment[i] = static_cast<T>(v);
    const double m_hat = m / correction1;
    const double v_hat = v / correction2;
    value[i] = static_cast<T>(value[i] - c.learning_rate * m_hat / (std::sqrt(v_hat) + c.epsilon));
  }
}

/// Adam over every parameter of one network.
template <Real T>
class AdamOptimizer {
 public:
  AdamOptimizer() = default;
  AdamOptimizer(const ParameterSet<T>& params, AdamConfig cfg) : params_(params) {
    cfg.validate();
    for (const auto& p : params_) states_.emplace_back(p.value().shape(), cfg);
  }

  void step() {
    for (std::size_t i = 0; i < params_.size(); ++i) adam_step(params_[i], states_[i]);
  }

  void zero_grad() { params_.zero_grad(); }

  const std::vector<AdamState<T>>& states() const { return states_; }
  std::uint64_t step_count() const { return states_.empty() ? 0 : states_.front().step_count; }

 private:
  ParameterSet<T> params_;
  std::vector<AdamState<T>> states_;
};

}  // namespace kinface
