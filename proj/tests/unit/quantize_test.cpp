// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "qreli/error.hpp"
#include "qreli/quantize.hpp"
#include "qreli/rng.hpp"
#include "quant_props.hpp"

namespace qreli::quant {
namespace {

TEST(Qparams, SymmetricUnitRange) {
  const Tensor t = Tensor::f32({3}, {-1.0f, 0.25f, 1.0f});
  const QuantParams qp = compute_qparams(t, {});
  EXPECT_FLOAT_EQ(qp.scale[0], 1.0f / 127.0f);
  EXPECT_EQ(qp.zero_point[0], 0);
  EXPECT_EQ(qp.qmin, -127);
  EXPECT_EQ(qp.qmax, 127);
}

TEST(Qparams, AsymmetricUnitInterval) {
  QuantConfig cfg;
  cfg.symmetric = false;
  const QuantParams qp = compute_qparams(Tensor::f32({3}, {0.0f, 0.3f, 1.0f}), cfg);
  EXPECT_FLOAT_EQ(qp.scale[0], 1.0f / 255.0f);
  EXPECT_EQ(qp.zero_point[0], 0);
  EXPECT_EQ(qp.qmin, 0);
  EXPECT_EQ(qp.qmax, 255);
}

TEST(Qparams, AsymmetricZeroPointFromMinimum) {
  QuantConfig cfg;
  cfg.symmetric = false;
  const QuantParams qp = compute_qparams(Tensor::f32({2}, {-1.0f, 3.0f}), cfg);
  EXPECT_FLOAT_EQ(qp.scale[0], 4.0f / 255.0f);
  EXPECT_EQ(qp.zero_point[0], 64);  // round(255/4)
}

TEST(Qparams, ZeroTensorFallsBackToUnitScale) {
  const QuantParams qp = compute_qparams(Tensor::zeros({4}), {});
  EXPECT_EQ(qp.scale[0], 1.0f);
  EXPECT_EQ(qp.degenerate_groups, 1u);
  const Tensor q = fake_quantize(Tensor::zeros({4}), qp);
  EXPECT_EQ(q, Tensor::zeros({4}));
}

TEST(Qparams, InvariantsOfIntegerRange) {
  for (int b = 2; b <= 16; ++b) {
    const auto [smin, smax] = integer_range(b, true);
    EXPECT_EQ(smax, (1 << (b - 1)) - 1);
    EXPECT_EQ(smin, -smax);
    const auto [amin, amax] = integer_range(b, false);
    EXPECT_EQ(amin, 0);
    EXPECT_EQ(amax, (1 << b) - 1);
  }
}

TEST(Qparams, RejectsBadConfig) {
  QuantConfig cfg;
  cfg.bits = 1;
  EXPECT_THROW(compute_qparams(Tensor::f32({1}, {1}), cfg), Error);
  cfg.bits = 17;
  EXPECT_THROW(compute_qparams(Tensor::f32({1}, {1}), cfg), Error);
  cfg.bits = 8;
  cfg.calibration = Calibration::Percentile;
  cfg.percentile = 1.5;
  EXPECT_THROW(compute_qparams(Tensor::f32({1}, {1}), cfg), Error);
  cfg.percentile = 0.0;
  EXPECT_THROW(compute_qparams(Tensor::f32({1}, {1}), cfg), Error);
}

TEST(Qparams, PercentileClipsOutliers) {
  std::vector<float> v(1000);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i) / 999.0f;
  v.back() = 1000.0f;
  QuantConfig cfg;
  cfg.calibration = Calibration::Percentile;
  cfg.percentile = 0.99;
  const QuantParams qp = compute_qparams(Tensor::f32({1000}, v), cfg);
  EXPECT_LT(qp.scale[0], 1.0f / 127.0f * 1.01f);
}

TEST(FakeQuantize, HalfRoundsAwayFromZero) {
  const QuantParams qp = make_params(1.0f / 127.0f, 0, 8, true);
  const Tensor q = fake_quantize(Tensor::f32({2}, {0.5f, -0.5f}), qp);
  EXPECT_NEAR(q.values()[0], 64.0 / 127.0, 1e-7);
  EXPECT_NEAR(q.values()[0], 0.503937, 1e-6);
  EXPECT_NEAR(q.values()[1], -64.0 / 127.0, 1e-7);
}

TEST(FakeQuantize, GridPointsAreFixed) {
  const float s = 0.125f;
  const QuantParams qp = make_params(s, 0, 4, true);
  std::vector<float> v;
  for (int k = -7; k <= 7; ++k) v.push_back(static_cast<float>(k) * s);
  const Tensor t = Tensor::f32({v.size()}, v);
  EXPECT_EQ(fake_quantize(t, qp), t);
}

TEST(FakeQuantize, SaturatesAtClamp) {
  const QuantParams qp = make_params(1.0f / 127.0f, 0, 8, true);
  const Tensor q = fake_quantize(Tensor::f32({2}, {10.0f, -10.0f}), qp);
  EXPECT_FLOAT_EQ(q.values()[0], 1.0f);
  EXPECT_FLOAT_EQ(q.values()[1], -1.0f);
}

TEST(FakeQuantize, NegativeZeroFolds) {
  const QuantParams qp = make_params(1.0f, 0, 8, true);
  const Tensor q = fake_quantize(Tensor::f32({1}, {-0.2f}), qp);
  EXPECT_FALSE(std::signbit(q.values()[0]));
}

TEST(FakeQuantize, PerChannelSingleChannelEqualsPerTensor) {
  Rng rng(8);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t rows = 1 + rng.below(6), cols = 1 + rng.below(9);
    std::vector<float> v(rows * cols);
    for (float& x : v) x = static_cast<float>(rng.normal(0.0, 2.0));
    const Tensor t = Tensor::f32({rows, cols}, v);
    QuantConfig pc;
    pc.bits = 2 + static_cast<int>(rng.below(7));
    pc.symmetric = trial % 2 == 0;
    pc.granularity = Granularity::PerChannel;
    pc.axis = 0;
    const Tensor per_channel = fake_quantize(t, compute_qparams(t, pc));
    QuantConfig pt = pc;
    pt.granularity = Granularity::PerTensor;
    for (std::size_t r = 0; r < rows; ++r) {
      const auto row = t.row(r);
      const Tensor slice = Tensor::f32({cols}, {row.begin(), row.end()});
      const Tensor expect = fake_quantize(slice, compute_qparams(slice, pt));
      for (std::size_t c = 0; c < cols; ++c) {
        EXPECT_EQ(per_channel.values()[r * cols + c], expect.values()[c]);
      }
    }
  }
}

TEST(FakeQuantize, ChannelAxisOutOfRange) {
  QuantConfig cfg;
  cfg.granularity = Granularity::PerChannel;
  cfg.axis = 2;
  EXPECT_THROW(compute_qparams(Tensor::zeros({2, 2}), cfg), Error);
}

TEST(FakeQuantize, RandomTensorProperties) {
  Rng rng(77);
  for (int trial = 0; trial < 600; ++trial) {
    const int bits = 2 + static_cast<int>(rng.below(15));
    const auto [t, cfg] = oracle::random_quant_case(rng, bits);
    const oracle::QuantPropResult r = oracle::check_quant_properties(t, cfg);
    ASSERT_TRUE(r.idempotent && r.error_bounded && r.in_range && r.unique_ok)
        << "trial " << trial << ": " << r.detail;
  }
}

TEST(VerifyUnique, Examples) {
  EXPECT_EQ(verify_unique_values(Tensor::f32({3}, {2, 2, 2}), 1).unique_count, 1u);
  Rng rng(1);
  std::vector<float> v(1000);
  for (float& x : v) x = static_cast<float>(rng.normal());
  const Tensor raw = Tensor::f32({1000}, v);
  const VerificationReport r = verify_unique_values(raw, 8);
  EXPECT_FALSE(r.pass);
  EXPECT_EQ(r.limit, 256u);
  const Tensor q = fake_quantize(raw, compute_qparams(raw, {}));
  const VerificationReport rq = verify_unique_values(q, 8);
  EXPECT_TRUE(rq.pass);
  EXPECT_LE(rq.unique_count, 255u);
}

TEST(VerifyUnique, CountsBitPatterns) {
  // +0 and -0 are distinct patterns.
  EXPECT_EQ(verify_unique_values(Tensor::f32({2}, {0.0f, -0.0f}), 8).unique_count, 2u);
}

}  // namespace
}  // namespace qreli::quant
