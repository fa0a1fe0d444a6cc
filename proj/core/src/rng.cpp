// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#include "qreli/rng.hpp"

#include <cmath>
#include <numbers>

namespace qreli {

namespace {

constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t Rng::next_u64() noexcept {
  ++counter_;
  return mix64(seed_ + counter_ * kGamma);
}

double Rng::uniform() noexcept {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  if (n == 0) return 0;
  // Rejection keeps the draw exactly uniform.
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() noexcept {
  if (has_spare_) {
    has_spare_ = false;
    return spare_normal_;
  }
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_normal_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Tensor Rng::normal_tensor(Shape shape, double mean, double stddev) {
  std::vector<float> data(element_count(shape));
  for (float& x : data) x = static_cast<float>(normal(mean, stddev));
  return Tensor::f32(std::move(shape), std::move(data));
}

Tensor Rng::uniform_tensor(Shape shape, double lo, double hi) {
  std::vector<float> data(element_count(shape));
  for (float& x : data) x = static_cast<float>(uniform(lo, hi));
  return Tensor::f32(std::move(shape), std::move(data));
}

Rng Rng::fork(std::uint64_t stream) const noexcept {
  return Rng(mix64(seed_ ^ mix64(stream + kGamma)));
}

}  // namespace qreli
