#include "ctsel/balancing/hsic.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "ctsel/common/error.hpp"

namespace ctsel::balancing {

double median_bandwidth(const ad::Tensor& samples) {
  const std::size_t n = samples.rows(), d = samples.cols();
  std::vector<double> dists;
  dists.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < d; ++k) {
        const double diff = samples(i, k) - samples(j, k);
        s += diff * diff;
      }
      dists.push_back(std::sqrt(s));
    }
  if (dists.empty()) return kBandwidthFloor;
  const auto mid = dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2);
  std::nth_element(dists.begin(), mid, dists.end());
  double med = *mid;
  if (dists.size() % 2 == 0) {
    const double lower = *std::max_element(dists.begin(), mid);
    med = 0.5 * (med + lower);
  }
  return std::max(med, kBandwidthFloor);
}

ad::Var gaussian_gram(ad::Var samples, double sigma) {
  if (!(sigma > 0.0)) throw ValidationError("kernel bandwidth must be positive");
  return ad::exp(ad::scale(ad::pairwise_sq_dists(samples), -1.0 / (2.0 * sigma * sigma)));
}

ad::Var hsic(ad::Var u, ad::Var v, const HsicConfig& config) {
  const std::size_t n = u.rows();
  if (v.rows() != n)
    throw ShapeError("hsic: sample counts differ (" + u.value().shape_string() + " vs " + v.value().shape_string() +
                     ")");
  if (n < kHsicMinSamples) throw ValidationError("hsic needs at least 4 samples, got " + std::to_string(n));
  const double su = config.bandwidth_u > 0.0 ? config.bandwidth_u : median_bandwidth(u.value());
  const double sv = config.bandwidth_v > 0.0 ? config.bandwidth_v : median_bandwidth(v.value());
  const ad::Var k = ad::double_center(gaussian_gram(u, su));
  const ad::Var l = gaussian_gram(v, sv);
  return ad::scale(ad::sum(ad::mul(k, l)), 1.0 / static_cast<double>(n * n));
}

double hsic_value(const ad::Tensor& u, const ad::Tensor& v, const HsicConfig& config) {
  ad::Tape tape;
  return hsic(tape.constant_ref(u), tape.constant_ref(v), config).value().item();
}

}  // namespace ctsel::balancing
