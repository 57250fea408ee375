#include "ctsel/ad/adamw.hpp"

#include <cmath>

#include "ctsel/common/error.hpp"

namespace ctsel::ad {

void adamw_step(Tensor& weights, const Tensor& grads, AdamWState& state, const AdamWConfig& config) {
  if (!weights.same_shape(grads))
    throw ShapeError("adamw: weight shape " + weights.shape_string() + " vs gradient shape " + grads.shape_string());
  if (state.m.size() != weights.size()) {
    state.m = Tensor(weights.shape(), 0.0);
    state.v = Tensor(weights.shape(), 0.0);
    state.step = 0;
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  const double decay = 1.0 - config.lr * config.weight_decay;
  double* w = weights.data();
  double* m = state.m.data();
  double* v = state.v.data();
  const double* g = grads.data();
  for (std::size_t i = 0; i < weights.size(); ++i) {
    m[i] = config.beta1 * m[i] + (1.0 - config.beta1) * g[i];
    v[i] = config.beta2 * v[i] + (1.0 - config.beta2) * g[i] * g[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    w[i] = w[i] * decay - config.lr * m_hat / (std::sqrt(v_hat) + config.eps);
  }
}

AdamW::AdamW(std::vector<Tensor*> params, AdamWConfig config)
    : params_(std::move(params)), states_(params_.size()), config_(config) {}

void AdamW::step(const std::vector<Tensor>& grads) {
  if (grads.size() != params_.size())
    throw ShapeError("adamw: " + std::to_string(grads.size()) + " gradients for " + std::to_string(params_.size()) +
                     " parameters");
  for (std::size_t i = 0; i < params_.size(); ++i) adamw_step(*params_[i], grads[i], states_[i], config_);
}

}  // namespace ctsel::ad
