// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "qreli/tensor.hpp"

namespace qreli::quant {

enum class Granularity { PerTensor, PerChannel };
enum class Calibration { MinMax, Percentile };

struct QuantConfig {
  int bits = 8;
  bool symmetric = true;
  Granularity granularity = Granularity::PerTensor;
  std::size_t axis = 0;  // channel axis for PerChannel
  Calibration calibration = Calibration::MinMax;
  double percentile = 1.0;  // p in (0, 1] for Percentile

  /// Throws InvalidArgument when bits are outside 2..16 or p outside (0, 1].
  void validate() const;
};

/// Calibrated affine grid. One (scale, zero_point) per group; a single group
/// for per-tensor quantization.
struct QuantParams {
  std::vector<float> scale;
  std::vector<std::int32_t> zero_point;
  std::int32_t qmin = 0;
  std::int32_t qmax = 0;
  std::optional<std::size_t> channel_axis;
  /// Groups whose range was degenerate and fell back to scale 1.0.
  std::size_t degenerate_groups = 0;

  std::size_t groups() const noexcept { return scale.size(); }
  void validate() const;
};

/// Integer bounds for a bit-width: signed symmetric [-(2^(b-1)-1), 2^(b-1)-1]
/// or unsigned asymmetric [0, 2^b - 1].
std::pair<std::int32_t, std::int32_t> integer_range(int bits, bool symmetric);

/// Single-group parameters without a calibration pass.
QuantParams make_params(float scale, std::int32_t zero_point, int bits, bool symmetric);

QuantParams compute_qparams(const Tensor& t, const QuantConfig& cfg);

/// (clamp(round(x/scale + zp), qmin, qmax) - zp) * scale, rounding half away
/// from zero. Single-element kernel shared with the QAT forward pass.
inline float fake_quantize_value(float x, float scale, float zero_point, float qmin,
                                 float qmax) noexcept {
  float q = std::round(x / scale + zero_point);
  q = q < qmin ? qmin : (q > qmax ? qmax : q);
  return (q - zero_point) * scale + 0.0f;  // +0.0f folds -0 into +0
}

Tensor fake_quantize(const Tensor& t, const QuantParams& qp);

struct VerificationReport {
  std::size_t unique_count = 0;
  std::size_t limit = 0;
  bool pass = false;
};

/// Counts distinct f32 bit patterns; passes when the count fits 2^bits.
VerificationReport verify_unique_values(const Tensor& t, int bits);

}  // namespace qreli::quant
