// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>

#include "qreli/tensor.hpp"

namespace qreli {

/// Counter-based generator: draw k is splitmix64(seed + k * golden_gamma).
/// Every distribution below is implemented here, not via <random>, so a seed
/// yields the same stream on every platform and standard library.
class Rng {
 public:
  static constexpr std::string_view kAlgorithm = "splitmix64-counter";

  explicit Rng(std::uint64_t seed) noexcept : seed_(seed) {}

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t counter() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;
  /// Standard normal via Box-Muller.
  double normal() noexcept;
  double normal(double mean, double stddev) noexcept { return mean + stddev * normal(); }

  Tensor normal_tensor(Shape shape, double mean = 0.0, double stddev = 1.0);
  Tensor uniform_tensor(Shape shape, double lo, double hi);

  /// Derives an independent stream, e.g. one per worker or per sub-experiment.
  Rng fork(std::uint64_t stream) const noexcept;

 private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace qreli
