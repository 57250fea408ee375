#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "ctsel/ad/tensor.hpp"

namespace ctsel::ad {

struct AdamWConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// First and second moment estimates for one parameter tensor.
struct AdamWState {
  Tensor m;
  Tensor v;
  std::uint64_t step = 0;
};

/// Decoupled-weight-decay Adam: w <- w (1 - lr wd) - lr m_hat / (sqrt(v_hat) + eps).
void adamw_step(Tensor& weights, const Tensor& grads, AdamWState& state, const AdamWConfig& config);

/// Optimizer over a fixed list of parameter tensors.
class AdamW {
 public:
  AdamW(std::vector<Tensor*> params, AdamWConfig config);

  /// grads[i] pairs with params[i].
  void step(const std::vector<Tensor>& grads);
  const AdamWConfig& config() const { return config_; }
  void set_lr(double lr) { config_.lr = lr; }

 private:
  std::vector<Tensor*> params_;
  std::vector<AdamWState> states_;
  AdamWConfig config_;
};

}  // namespace ctsel::ad
