#pragma once

#include "rahmc/core.hpp"

#include <cstdint>
#include <random>

namespace rahmc {

using Rng = std::mt19937_64;

/// Independent stream for chain `index` of a run seeded with `master_seed`.
/// Streams are derived through seed_seq so neighbouring indices do not share
/// state prefixes.
inline Rng make_rng(std::uint64_t master_seed, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(master_seed), static_cast<std::uint32_t>(master_seed >> 32),
                    static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
                    0x9e3779b9u};
  return Rng(seq);
}

inline Vector standard_normal(Rng& rng, Eigen::Index d) {
  std::normal_distribution<double> n01(0.0, 1.0);
  Vector z(d);
  for (Eigen::Index i = 0; i < d; ++i) z[i] = n01(rng);
  return z;
}

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace rahmc
