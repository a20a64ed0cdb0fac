// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "sspam/tensor.hpp"

namespace sspam {

/// xoshiro256** seeded through splitmix64. Uniforms take the top 53 bits;
/// normals use the Box–Muller cosine branch (one normal per two uniforms),
/// so a given seed yields the same stream on every platform with a
/// conforming libm.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in (0, 1].
  double uniform_open_low();
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  /// Uniform integer in [0, n). n must be positive.
  std::uint64_t below(std::uint64_t n);

  std::uint64_t seed() const noexcept { return seed_; }

 private:
  std::uint64_t seed_;
  std::uint64_t s_[4];
};

Matrix random_normal(std::size_t rows, std::size_t cols, Rng& rng, double stddev = 1.0);
Matrix random_uniform(std::size_t rows, std::size_t cols, Rng& rng, double lo, double hi);

}  // namespace sspam
