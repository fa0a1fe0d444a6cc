// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include "qat_gradcheck.hpp"

namespace qreli::oracle {
namespace {

TEST(QatGradients, MatchFiniteDifferencesOfTheShadow) {
  const GradSuiteResult r = run_gradient_suite(1, 25);
  EXPECT_EQ(r.interior, 25u);
  EXPECT_EQ(r.saturated, 25u);
  EXPECT_GT(r.lsq_scales, 0u);
  EXPECT_LT(r.max_rel_err, 1e-3) << r.worst;
}

TEST(QatGradients, SaturatedCasesActuallyClamp) {
  std::size_t saturated = 0;
  for (std::uint64_t seed = 100; seed < 120; ++seed) saturated += check_gradients(make_case(seed, true)).saturated;
  EXPECT_GT(saturated, 10u);
}

}  // namespace
}  // namespace qreli::oracle
