#include "ctsel/uncertainty/ranking.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ctsel/common/error.hpp"
#include "ctsel/common/rng.hpp"

namespace ctsel::uncertainty {

std::vector<std::size_t> rank_by_uncertainty(std::span<const double> uncertainty) {
  std::vector<std::size_t> order(uncertainty.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return uncertainty[a] < uncertainty[b]; });
  return order;
}

std::size_t subset_size(std::size_t n, double percent) {
  if (!(percent > 0.0 && percent <= 100.0)) throw ValidationError("percentile must lie in (0, 100]");
  const double exact = percent * static_cast<double>(n) / 100.0;
  const auto k = static_cast<std::size_t>(std::ceil(exact - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

PercentileSubsets percentile_subsets(std::span<const double> uncertainty, double percent, std::uint64_t seed) {
  const std::size_t n = uncertainty.size();
  if (n == 0) throw ValidationError("cannot rank an empty patient set");
  const std::size_t k = subset_size(n, percent);
  PercentileSubsets s;
  const auto order = rank_by_uncertainty(uncertainty);
  s.least_uncertain.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  Rng rng(seed);
  std::shuffle(all.begin(), all.end(), rng);
  s.random.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(k));
  std::sort(s.random.begin(), s.random.end());
  return s;
}

}  // namespace ctsel::uncertainty
