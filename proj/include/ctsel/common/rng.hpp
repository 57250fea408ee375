#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace ctsel {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent stream seeds.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Counter-based seed derivation: the result depends only on the master seed
/// and the ordered stream coordinates, never on call order or thread layout.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> coords) noexcept;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

inline Rng make_rng(std::uint64_t master, std::initializer_list<std::uint64_t> coords) {
  return Rng(derive_seed(master, coords));
}

}  // namespace ctsel
