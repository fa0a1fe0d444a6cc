// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#include <gtest/gtest.h>

#include <cmath>

#include "qreli/error.hpp"
#include "qreli/spectral.hpp"
#include "spectral_suite.hpp"

namespace qreli::spectral {
namespace {

TEST(Grid, ParseAndFormat) {
  EXPECT_EQ(parse_grid("7x7"), (Grid{7, 7}));
  EXPECT_EQ(parse_grid("16x12"), (Grid{16, 12}));
  EXPECT_EQ(format_grid({16, 16}), "16x16");
  EXPECT_THROW(parse_grid("7*7"), Error);
  EXPECT_THROW(parse_grid("0x4"), Error);
}

TEST(Spectrum, ConstantMapOnFourByFour) {
  const SpectrumMap m = spectrum(oracle::single_map(std::vector<float>(16, 2.5f), {4, 4}));
  for (std::size_t k = 0; k < 16; ++k) {
    if (k == 2 * 4 + 2) {
      EXPECT_EQ(m.mag.values()[k], 40.0f);
    } else {
      EXPECT_EQ(m.mag.values()[k], 0.0f) << k;
    }
  }
  const BandSummary b = band_energy(m);
  EXPECT_GT(b.low, 0.0);
  EXPECT_EQ(b.mid, 0.0);
  EXPECT_EQ(b.high, 0.0);
}

TEST(Spectrum, ConstantMapsConcentrateAtDcExactly) {
  const oracle::DcResult r = oracle::constant_dc(5, 200);
  EXPECT_EQ(r.off_dc_max, 0.0);
  EXPECT_EQ(r.dc_error, 0.0);
}

TEST(Spectrum, ZeroInput) {
  const SpectrumMap m = spectrum({Tensor::zeros({2, 49, 3}), {7, 7}});
  for (float v : m.mag.values()) EXPECT_EQ(v, 0.0f);
}

TEST(Spectrum, Parseval) { EXPECT_LE(oracle::parseval_gap(6, 200), 1e-4); }

TEST(Spectrum, MatchesDirectDft) { EXPECT_LE(oracle::dft_oracle_gap(7, 100), 1e-5); }

TEST(Spectrum, TranslationInvariant) { EXPECT_LE(oracle::translation_gap(8, 100), 1e-5); }

TEST(Spectrum, PointSymmetricForRealInput) {
  Rng rng(9);
  for (const Grid g : {Grid{7, 7}, Grid{16, 16}, Grid{6, 9}}) {
    const SpectrumMap m = spectrum({rng.normal_tensor({3, g.cells(), 5}), g});
    // Unshifted bin (u, v) pairs with (-u, -v); in centred coordinates the
    // partner of index i is (2*(h/2) - i) mod h.
    for (std::size_t i = 0; i < g.h; ++i) {
      for (std::size_t j = 0; j < g.w; ++j) {
        const std::size_t pi = (2 * (g.h / 2) + g.h - i) % g.h;
        const std::size_t pj = (2 * (g.w / 2) + g.w - j) % g.w;
        EXPECT_NEAR(m.mag.values()[i * g.w + j], m.mag.values()[pi * g.w + pj], 1e-5);
      }
    }
  }
}

TEST(Spectrum, AveragesMagnitudesNotComplexValues) {
  // Two channels with opposite signs: complex averaging would cancel.
  std::vector<float> v(2 * 4);
  for (std::size_t k = 0; k < 4; ++k) {
    v[k * 2] = k % 2 ? 1.0f : -1.0f;
    v[k * 2 + 1] = -v[k * 2];
  }
  const SpectrumMap m = spectrum({Tensor::f32({1, 4, 2}, v), {2, 2}});
  float total = 0.0f;
  for (float x : m.mag.values()) total += x;
  EXPECT_EQ(total, 4.0f);
}

TEST(Spectrum, GridMismatch) {
  try {
    spectrum({Tensor::zeros({1, 48, 2}), {7, 7}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::GridMismatch);
  }
}

TEST(Rse, IdentityIsZero) { EXPECT_EQ(oracle::rse_identity_max(10, 50), 0.0); }

TEST(Rse, DoubledSpectrumGivesOne) {
  Rng rng(11);
  const Grid g{7, 7};
  const SpectrumMap base = spectrum({rng.normal_tensor({2, 49, 4}), g});
  SpectrumMap twice = base;
  for (float& v : twice.mag.values()) v *= 2.0f;
  const RseMap r = rse(base, twice);
  for (float v : r.rse.values()) EXPECT_NEAR(v, 1.0f, 1e-6);
}

TEST(Rse, EpsilonRegularizesZeroBins) {
  const SpectrumMap base{Tensor::f32({1, 2}, {0.0f, 1.0f}), {1, 2}};
  const SpectrumMap q{Tensor::f32({1, 2}, {0.5f, 1.0f}), {1, 2}};
  const RseMap r = rse(base, q);
  EXPECT_FLOAT_EQ(r.rse.values()[0], 0.5e9f);
  EXPECT_EQ(r.rse.values()[1], 0.0f);
  EXPECT_TRUE(std::isfinite(r.rse.values()[0]));
}

TEST(Rse, GridMismatch) {
  const SpectrumMap a{Tensor::zeros({2, 2}), {2, 2}};
  const SpectrumMap b{Tensor::zeros({1, 4}), {1, 4}};
  EXPECT_THROW(rse(a, b), Error);
}

TEST(Bands, UniformOnes) {
  const Tensor ones = Tensor::f32({7, 7}, std::vector<float>(49, 1.0f));
  const BandSummary b = band_energy(ones);
  EXPECT_EQ(b.low, 1.0);
  EXPECT_EQ(b.mid, 1.0);
  EXPECT_EQ(b.high, 1.0);
}

TEST(Bands, CheckerboardIsHighFrequency) {
  std::vector<float> v(64);
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = 0; j < 8; ++j) v[i * 8 + j] = (i + j) % 2 ? -1.0f : 1.0f;
  }
  const SpectrumMap m = spectrum(oracle::single_map(v, {8, 8}));
  const BandSummary b = band_energy(m);
  EXPECT_GT(b.high, 0.0);
  EXPECT_EQ(b.low, 0.0);
  EXPECT_EQ(b.mid, 0.0);
  // Direct-sum oracle puts all 64 units at the Nyquist corner (0, 0) after centring.
  EXPECT_EQ(m.mag.values()[0], 64.0f);
}

TEST(FeatureMaps, BundleGridFromMeta) {
  TensorBundle b;
  b.put("tokens", Tensor::zeros({1, 49, 2}));
  b.meta["grid"] = "7x7";
  EXPECT_EQ(FeatureMapSet::from_bundle(b).grid, (Grid{7, 7}));
  TensorBundle no_grid;
  no_grid.put("tokens", Tensor::zeros({1, 49, 2}));
  EXPECT_THROW(FeatureMapSet::from_bundle(no_grid), Error);
  EXPECT_EQ(FeatureMapSet::from_bundle(no_grid, Grid{7, 7}).grid, (Grid{7, 7}));
}

}  // namespace
}  // namespace qreli::spectral
