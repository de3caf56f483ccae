#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace eegpolicy {

using Rng = std::mt19937_64;

// Independent stream for (seed, stream) pairs; used to give every tree, fold and
// replicate its own generator.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return Rng(derive_seed(seed, stream));
}

// Fisher-Yates over [0, n).
std::vector<std::size_t> random_permutation(std::size_t n, Rng& rng);

// Uniform in [0, 1) built from the top 53 bits, independent of the standard
// library's distribution implementation.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

double standard_normal(Rng& rng);

}  // namespace eegpolicy
