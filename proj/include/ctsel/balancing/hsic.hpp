#pragma once

#include "ctsel/ad/ops.hpp"

namespace ctsel::balancing {

/// Gaussian-kernel bandwidths; a value <= 0 selects the median heuristic.
struct HsicConfig {
  double bandwidth_u = 0.0;
  double bandwidth_v = 0.0;
};

inline constexpr double kBandwidthFloor = 1e-6;
inline constexpr std::size_t kHsicMinSamples = 4;

/// Median pairwise Euclidean distance between rows, floored at 1e-6.
double median_bandwidth(const ad::Tensor& samples);

/// exp(-||x_i - x_j||^2 / (2 sigma^2)). sigma is treated as a constant.
ad::Var gaussian_gram(ad::Var samples, double sigma);

/// Biased V-statistic (1/n^2) tr(K H L H); differentiable in both arguments.
ad::Var hsic(ad::Var u, ad::Var v, const HsicConfig& config = {});

/// Value-only convenience wrapper.
double hsic_value(const ad::Tensor& u, const ad::Tensor& v, const HsicConfig& config = {});

}  // namespace ctsel::balancing
