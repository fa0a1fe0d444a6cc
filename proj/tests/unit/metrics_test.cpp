// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "metric_instance.hpp"
#include "metric_oracles.hpp"
#include "qreli/error.hpp"
#include "qreli/metrics.hpp"
#include "random_cases.hpp"
#include "temperature_instance.hpp"

namespace qreli::metrics {
namespace {

LogitSet make(std::vector<float> z, std::vector<std::int64_t> y) {
  const std::size_t n = y.size();
  const std::size_t c = z.size() / n;
  return {Tensor::f32({n, c}, std::move(z)), Tensor::i64({n}, std::move(y))};
}

TEST(Softmax, HandValues) {
  const SoftmaxOutput s = softmax_confidences(make({0, 0, 2, 0}, {0, 0}));
  EXPECT_DOUBLE_EQ(s.probs[0], 0.5);
  EXPECT_DOUBLE_EQ(s.conf[0], 0.5);
  EXPECT_NEAR(s.conf[1], std::exp(2.0) / (std::exp(2.0) + 1.0), 1e-15);
  EXPECT_NEAR(s.conf[1], 0.880797, 1e-6);
  EXPECT_EQ(s.pred[1], 0);
}

TEST(Softmax, ShiftInvariant) {
  Rng rng(1);
  const LogitSet l = oracle::random_logit_set(rng, 50, 6);
  LogitSet shifted = l;
  for (std::size_t i = 0; i < 50; ++i) {
    const float c = static_cast<float>(i) * 3.0f - 40.0f;
    for (float& v : shifted.logits.row(i)) v += c;
  }
  const SoftmaxOutput a = softmax_confidences(l);
  const SoftmaxOutput b = softmax_confidences(shifted);
  for (std::size_t i = 0; i < a.probs.size(); ++i) EXPECT_NEAR(a.probs[i], b.probs[i], 1e-5);
}

TEST(Ece, OneBinHandExample) {
  // Four rows at confidence 0.8 (log 12 margin over 3 uniform rivals), three correct.
  const float m = static_cast<float>(std::log(12.0));
  const ReliabilityReport r =
      ece(make({m, 0, 0, 0, m, 0, 0, 0, m, 0, 0, 0, m, 0, 0, 0}, {0, 0, 0, 1}));
  EXPECT_NEAR(r.ece, 0.05, 1e-7);
  EXPECT_EQ(r.n, 4u);
}

TEST(Ece, PerfectCalibration) {
  const ReliabilityReport r = ece(make({1000, 0, 0, 1000}, {0, 1}));
  EXPECT_EQ(r.ece, 0.0);
  EXPECT_EQ(r.nll, 0.0);
  EXPECT_EQ(r.bins.back().count, 2u);
}

TEST(Ece, HalfProbabilityNll) {
  const ReliabilityReport r = ece(make({0, 0}, {1}));
  EXPECT_NEAR(r.nll, std::log(2.0), 1e-15);
  EXPECT_NEAR(nll(make({0, 0}, {1})), 0.693147, 1e-6);
}

TEST(Ece, BinsPartitionLabeledRows) {
  Rng rng(2);
  for (int t = 0; t < 50; ++t) {
    const LogitSet l = oracle::random_logit_set(rng, 1 + rng.below(100), 2 + rng.below(5));
    const ReliabilityReport r = ece(l);
    std::size_t total = 0;
    for (std::size_t b = 0; b < r.bins.size(); ++b) {
      total += r.bins[b].count;
      EXPECT_DOUBLE_EQ(r.bins[b].lo, static_cast<double>(b) / 15.0);
    }
    EXPECT_EQ(total, l.labeled_rows());
    EXPECT_GE(r.ece, 0.0);
    EXPECT_LE(r.ece, 1.0);
    EXPECT_GE(r.nll, 0.0);
  }
}

TEST(Ece, ZeroWhenEveryBinIsCalibrated) {
  // Two classes at confidence 0.75 (logit gap log 3): 3 of 4 correct per block.
  const float g = static_cast<float>(std::log(3.0));
  std::vector<float> z;
  std::vector<std::int64_t> y;
  for (int block = 0; block < 5; ++block) {
    for (int i = 0; i < 4; ++i) {
      z.insert(z.end(), {g, 0.0f});
      y.push_back(i < 3 ? 0 : 1);
    }
  }
  EXPECT_NEAR(ece(make(z, y)).ece, 0.0, 1e-7);
}

TEST(Ece, ConfidenceBinEdges) {
  EXPECT_EQ(confidence_bin(0.0, 15), 0u);
  EXPECT_EQ(confidence_bin(1.0, 15), 14u);
  EXPECT_EQ(confidence_bin(0.5, 2), 0u);  // right-closed
  EXPECT_EQ(confidence_bin(std::nextafter(0.5, 1.0), 2), 1u);
  EXPECT_EQ(confidence_bin(0.2, 10), 1u);
  EXPECT_EQ(confidence_bin(0.3, 10), 2u);
}

TEST(Ece, NoLabeledRows) {
  try {
    ece(make({1, 0}, {-1}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoLabeledRows);
  }
}

TEST(Ece, MatchesNaiveLoops) {
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    const oracle::MetricInstanceResult r = oracle::run_metric_instance(seed);
    ASSERT_TRUE(r.pass()) << "seed " << seed << ": " << r.describe();
  }
}

TEST(Temperature, AllCorrectGoesToLowerBound) {
  const LogitSet l = make({2, 0, 0, 3, 1, 0}, {0, 1, 0});
  const TemperatureFit f = fit_temperature(l);
  EXPECT_EQ(f.t_star, 0.01);
  EXPECT_LE(f.nll_after, f.nll_before);
  // Grid oracle: NLL is decreasing in 1/t.
  double prev = INFINITY;
  for (double t = 100.0; t >= 0.01; t /= 1.5) {
    const double v = nll(l, 1.0 / t);
    EXPECT_LE(v, prev);
    prev = v;
  }
}

TEST(Temperature, MatchesGridOracle) {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const LogitSet l = oracle::random_logit_set(rng, 200, 5);
    const TemperatureFit f = fit_temperature(l);
    double best_t = 1.0, best = INFINITY;
    for (double u = std::log(0.01); u <= std::log(100.0); u += 1e-3) {
      const double v = nll(l, std::exp(-u));
      if (v < best) {
        best = v;
        best_t = std::exp(u);
      }
    }
    EXPECT_LE(f.nll_after, best + 1e-9);
    EXPECT_NEAR(std::log(f.t_star), std::log(best_t), 2e-3);
  }
}

TEST(Temperature, InstancesHoldTheirProperties) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const oracle::TemperatureInstanceResult r = oracle::run_temperature_instance(seed);
    EXPECT_TRUE(r.pass()) << "seed " << seed << " t* " << r.t_star << " refit " << r.t_refit;
  }
}

TEST(Temperature, NeedsTwoLabeledRows) {
  EXPECT_THROW(fit_temperature(make({1, 0, 0, 1}, {0, -1})), Error);
}

TEST(BinShift, IdentityKeepsMeans) {
  Rng rng(4);
  const LogitSet l = oracle::random_logit_set(rng, 120, 4);
  const BinShiftReport r = bin_shift(l, l);
  std::size_t total = 0;
  for (const BinShiftGroup& g : r.groups) {
    total += g.count;
    EXPECT_EQ(g.mean_conf_before, g.mean_conf_after);
    EXPECT_EQ(g.mean_acc_before, g.mean_acc_after);
  }
  EXPECT_EQ(total, 120u);
}

TEST(BinShift, HalvedLogitsFollowTheSameGroups) {
  Rng rng(5);
  const std::size_t c = 4;
  const LogitSet l = oracle::random_logit_set(rng, 150, c);
  const LogitSet half = scale_logits(l, 0.5);
  const BinShiftReport r = bin_shift(l, half);
  const SoftmaxOutput sb = softmax_confidences(l);
  const SoftmaxOutput sa = softmax_confidences(half);
  for (const BinShiftGroup& g : r.groups) {
    double cb = 0.0, ca = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < 150; ++i) {
      if (confidence_bin(sb.conf[i], 15) != g.source_bin) continue;
      ++n;
      cb += sb.conf[i];
      ca += sa.conf[i];
      EXPECT_LE(sa.conf[i], sb.conf[i] + 1e-12);
      EXPECT_GE(sa.conf[i], 1.0 / static_cast<double>(c) - 1e-12);
    }
    ASSERT_EQ(n, g.count);
    if (n == 0) continue;
    EXPECT_NEAR(g.mean_conf_before, cb / static_cast<double>(n), 1e-12);
    EXPECT_NEAR(g.mean_conf_after, ca / static_cast<double>(n), 1e-12);
  }
}

TEST(BinShift, ConservesSamples) {
  Rng rng(6);
  for (int t = 0; t < 30; ++t) {
    const std::size_t n = 1 + rng.below(80);
    const LogitSet a = oracle::random_logit_set(rng, n, 3);
    LogitSet b = oracle::random_logit_set(rng, n, 3);
    b.labels = a.labels;
    const std::size_t bins = 1 + rng.below(20);
    std::size_t total = 0;
    for (const BinShiftGroup& g : bin_shift(a, b, bins).groups) total += g.count;
    EXPECT_EQ(total, n);
  }
}

TEST(BinShift, SingleSample) {
  const BinShiftReport r = bin_shift(make({1, 0}, {0}), make({0, 1}, {0}));
  std::size_t nonempty = 0;
  for (const BinShiftGroup& g : r.groups) nonempty += g.count > 0;
  EXPECT_EQ(nonempty, 1u);
}

TEST(BinShift, LengthMismatch) {
  try {
    bin_shift(make({1, 0}, {0}), make({1, 0, 0, 1}, {0, 1}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::LengthMismatch);
  }
}

}  // namespace
}  // namespace qreli::metrics
