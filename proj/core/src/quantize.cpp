// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#include "qreli/quantize.hpp"

#include <algorithm>
#include <bit>
#include <string>
#include <tuple>
#include <unordered_set>

namespace qreli::quant {

void QuantConfig::validate() const {
  if (bits < 2 || bits > 16) {
    throw Error(ErrorKind::InvalidArgument, "bits must lie in 2..16, got " + std::to_string(bits));
  }
  if (calibration == Calibration::Percentile && !(percentile > 0.0 && percentile <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "percentile must lie in (0, 1]");
  }
}

void QuantParams::validate() const {
  if (scale.empty() || scale.size() != zero_point.size()) {
    throw Error(ErrorKind::InvalidArgument, "scale/zero_point must be non-empty and equal length");
  }
  if (qmin >= qmax) throw Error(ErrorKind::InvalidArgument, "qmin must be below qmax");
  for (std::size_t g = 0; g < scale.size(); ++g) {
    if (!(scale[g] > 0.0f) || !std::isfinite(scale[g])) {
      throw Error(ErrorKind::InvalidArgument, "scale must be positive and finite");
    }
  }
}

std::pair<std::int32_t, std::int32_t> integer_range(int bits, bool symmetric) {
  if (symmetric) {
    const std::int32_t q = (std::int32_t{1} << (bits - 1)) - 1;
    return {-q, q};
  }
  return {0, (std::int32_t{1} << bits) - 1};
}

QuantParams make_params(float scale, std::int32_t zero_point, int bits, bool symmetric) {
  QuantParams qp;
  std::tie(qp.qmin, qp.qmax) = integer_range(bits, symmetric);
  qp.scale = {scale};
  qp.zero_point = {zero_point};
  qp.validate();
  return qp;
}

namespace {

struct GroupLayout {
  std::size_t groups = 1;
  std::size_t inner = 1;  // product of extents after the channel axis

  std::size_t group_of(std::size_t flat) const noexcept {
    return groups == 1 ? 0 : (flat / inner) % groups;
  }
};

GroupLayout layout_for(const Shape& shape, std::optional<std::size_t> axis) {
  GroupLayout l;
  if (!axis) return l;
  if (*axis >= shape.size()) {
    throw Error(ErrorKind::DimensionMismatch, "channel axis " + std::to_string(*axis) +
                                                  " out of range for rank " +
                                                  std::to_string(shape.size()));
  }
  l.groups = shape[*axis];
  for (std::size_t d = *axis + 1; d < shape.size(); ++d) l.inner *= shape[d];
  return l;
}

// Linear-interpolated quantile of an unsorted sample (consumed).
double quantile(std::vector<float>& v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (static_cast<double>(v[hi]) - v[lo]);
}

}  // namespace

QuantParams compute_qparams(const Tensor& t, const QuantConfig& cfg) {
  cfg.validate();
  const auto x = t.values();
  if (x.empty()) throw Error(ErrorKind::InvalidArgument, "cannot calibrate an empty tensor");

  QuantParams qp;
  std::tie(qp.qmin, qp.qmax) = integer_range(cfg.bits, cfg.symmetric);
  if (cfg.granularity == Granularity::PerChannel) qp.channel_axis = cfg.axis;
  const GroupLayout layout = layout_for(t.shape(), qp.channel_axis);

  std::vector<std::vector<float>> members(layout.groups);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float v = cfg.symmetric ? std::fabs(x[i]) : x[i];
    members[layout.group_of(i)].push_back(v);
  }

  qp.scale.resize(layout.groups);
  qp.zero_point.resize(layout.groups);
  const double span = static_cast<double>(qp.qmax) - qp.qmin;
  for (std::size_t g = 0; g < layout.groups; ++g) {
    auto& m = members[g];
    if (m.empty()) throw Error(ErrorKind::InvalidArgument, "empty quantization group");
    double lo;
    double hi;
    if (cfg.calibration == Calibration::MinMax || cfg.percentile == 1.0) {
      auto [mn, mx] = std::minmax_element(m.begin(), m.end());
      lo = *mn;
      hi = *mx;
    } else if (cfg.symmetric) {
      lo = 0.0;
      hi = quantile(m, cfg.percentile);
    } else {
      std::vector<float> copy = m;
      lo = quantile(copy, 1.0 - cfg.percentile);
      hi = quantile(m, cfg.percentile);
    }

    if (cfg.symmetric) {
      if (!(hi > 0.0)) {
        qp.scale[g] = 1.0f;
        qp.zero_point[g] = 0;
        ++qp.degenerate_groups;
        continue;
      }
      qp.scale[g] = static_cast<float>(hi / qp.qmax);
      qp.zero_point[g] = 0;
    } else {
      lo = std::min(lo, 0.0);
      hi = std::max(hi, 0.0);
      if (!(hi > lo)) {
        qp.scale[g] = 1.0f;
        qp.zero_point[g] = 0;
        ++qp.degenerate_groups;
        continue;
      }
      const float scale = static_cast<float>((hi - lo) / span);
      qp.scale[g] = scale;
      const double zp = std::round(-lo / static_cast<double>(scale));
      qp.zero_point[g] = static_cast<std::int32_t>(
          std::clamp(zp, static_cast<double>(qp.qmin), static_cast<double>(qp.qmax)));
    }
  }
  return qp;
}

Tensor fake_quantize(const Tensor& t, const QuantParams& qp) {
  qp.validate();
  const GroupLayout layout = layout_for(t.shape(), qp.channel_axis);
  if (layout.groups != qp.groups()) {
    throw Error(ErrorKind::DimensionMismatch, "qparams carry " + std::to_string(qp.groups()) +
                                                  " groups, tensor has " +
                                                  std::to_string(layout.groups));
  }
  Tensor out = t;
  auto y = out.values();
  const auto qmin = static_cast<float>(qp.qmin);
  const auto qmax = static_cast<float>(qp.qmax);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const std::size_t g = layout.group_of(i);
    y[i] = fake_quantize_value(y[i], qp.scale[g], static_cast<float>(qp.zero_point[g]), qmin, qmax);
  }
  return out;
}

VerificationReport verify_unique_values(const Tensor& t, int bits) {
  if (bits < 1 || bits > 62) throw Error(ErrorKind::InvalidArgument, "bits out of range");
  std::unordered_set<std::uint32_t> patterns;
  for (float v : t.values()) patterns.insert(std::bit_cast<std::uint32_t>(v));
  VerificationReport r;
  r.unique_count = patterns.size();
  r.limit = std::size_t{1} << bits;
  r.pass = r.unique_count <= r.limit;
  return r;
}

}  // namespace qreli::quant
