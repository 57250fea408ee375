#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace ctsel::uncertainty {

/// Indices sorted ascending by uncertainty; ties keep index order.
std::vector<std::size_t> rank_by_uncertainty(std::span<const double> uncertainty);

/// Number of patients in the p% subset: ceil(p n / 100), at least 1.
std::size_t subset_size(std::size_t n, double percent);

struct PercentileSubsets {
  std::vector<std::size_t> least_uncertain;  // first subset_size entries of the ranking
  std::vector<std::size_t> random;           // size-matched uniform sample, ascending
};

PercentileSubsets percentile_subsets(std::span<const double> uncertainty, double percent, std::uint64_t seed);

}  // namespace ctsel::uncertainty
