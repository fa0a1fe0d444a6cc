// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

// Seeded spectral property checks shared by the unit and acceptance suites.

#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "dft_oracle.hpp"
#include "qreli/rng.hpp"
#include "qreli/spectral.hpp"

namespace qreli::oracle {

inline spectral::FeatureMapSet single_map(const std::vector<float>& v, spectral::Grid g) {
  return {Tensor::f32({1, g.cells(), 1}, v), g};
}

inline spectral::Grid random_grid(Rng& rng) {
  const spectral::Grid common[] = {{7, 7}, {16, 16}, {4, 4}, {14, 14}};
  if (rng.below(2) == 0) return common[rng.below(4)];
  return {1 + rng.below(12), 1 + rng.below(12)};
}

// Worst relative Parseval gap sum|X|^2 vs T * sum|x|^2 over random maps.
inline double parseval_gap(std::uint64_t seed, int trials) {
  Rng rng(seed);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const spectral::Grid g = random_grid(rng);
    std::vector<float> v(g.cells());
    const double scale = std::pow(10.0, rng.uniform(-3.0, 3.0));
    for (float& x : v) x = static_cast<float>(rng.normal(rng.uniform(-1.0, 1.0), scale));
    const spectral::SpectrumMap m = spectral::spectrum(single_map(v, g));
    double lhs = 0.0, rhs = 0.0;
    for (float a : m.mag.values()) lhs += static_cast<double>(a) * a;
    for (float x : v) rhs += static_cast<double>(x) * x;
    rhs *= static_cast<double>(g.cells());
    if (rhs > 0.0) worst = std::max(worst, std::fabs(lhs - rhs) / rhs);
  }
  return worst;
}

// Largest off-DC bin and DC error for constant maps; both must be exactly 0.
struct DcResult {
  double off_dc_max = 0.0;
  double dc_error = 0.0;
};

inline DcResult constant_dc(std::uint64_t seed, int trials) {
  Rng rng(seed);
  DcResult r;
  for (int t = 0; t < trials; ++t) {
    const spectral::Grid g = random_grid(rng);
    const std::size_t d = 1 + rng.below(4);
    const auto c = static_cast<float>(rng.uniform(-10.0, 10.0));
    const spectral::FeatureMapSet f{Tensor::f32({1, g.cells(), d}, std::vector<float>(g.cells() * d, c)), g};
    const spectral::SpectrumMap m = spectral::spectrum(f);
    const std::size_t dc = (g.h / 2) * g.w + g.w / 2;
    for (std::size_t k = 0; k < g.cells(); ++k) {
      const double v = m.mag.values()[k];
      if (k == dc) {
        const auto expect = static_cast<float>(static_cast<double>(g.cells()) * std::fabs(static_cast<double>(c)));
        r.dc_error = std::max(r.dc_error, std::fabs(v - expect));
      } else {
        r.off_dc_max = std::max(r.off_dc_max, std::fabs(v));
      }
    }
  }
  return r;
}

// rse(S, S) over random spectra; must be exactly 0.
inline double rse_identity_max(std::uint64_t seed, int trials) {
  Rng rng(seed);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const spectral::Grid g = random_grid(rng);
    const std::size_t n = 1 + rng.below(3), d = 1 + rng.below(5);
    const spectral::FeatureMapSet f{rng.normal_tensor({n, g.cells(), d}), g};
    const spectral::SpectrumMap s = spectral::spectrum(f);
    const spectral::RseMap r = spectral::rse(s, s);
    for (float v : r.rse.values()) worst = std::max(worst, static_cast<double>(v));
  }
  return worst;
}

// Magnitude change under a random cyclic shift of the grid.
inline double translation_gap(std::uint64_t seed, int trials) {
  Rng rng(seed);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const spectral::Grid g = random_grid(rng);
    const std::size_t d = 1 + rng.below(4);
    const Tensor x = rng.normal_tensor({1, g.cells(), d});
    const std::size_t di = rng.below(g.h), dj = rng.below(g.w);
    std::vector<float> y(x.size());
    for (std::size_t i = 0; i < g.h; ++i) {
      for (std::size_t j = 0; j < g.w; ++j) {
        const std::size_t src = i * g.w + j;
        const std::size_t dst = ((i + di) % g.h) * g.w + (j + dj) % g.w;
        for (std::size_t c = 0; c < d; ++c) y[dst * d + c] = x.values()[src * d + c];
      }
    }
    const spectral::SpectrumMap a = spectral::spectrum({x, g});
    const spectral::SpectrumMap b = spectral::spectrum({Tensor::f32({1, g.cells(), d}, y), g});
    for (std::size_t k = 0; k < g.cells(); ++k) {
      worst = std::max(worst, static_cast<double>(std::fabs(a.mag.values()[k] - b.mag.values()[k])));
    }
  }
  return worst;
}

// Largest gap to the direct-sum DFT for single-channel maps.
inline double dft_oracle_gap(std::uint64_t seed, int trials) {
  Rng rng(seed);
  double worst = 0.0;
  for (int t = 0; t < trials; ++t) {
    const spectral::Grid g = random_grid(rng);
    std::vector<float> v(g.cells());
    std::vector<double> vd(g.cells());
    for (std::size_t k = 0; k < v.size(); ++k) {
      v[k] = static_cast<float>(rng.normal());
      vd[k] = v[k];
    }
    const std::vector<double> ref = centre(dft_magnitude(vd, g.h, g.w), g.h, g.w);
    const spectral::SpectrumMap m = spectral::spectrum(single_map(v, g));
    for (std::size_t k = 0; k < ref.size(); ++k) {
      worst = std::max(worst, std::fabs(m.mag.values()[k] - ref[k]) / std::max(1.0, ref[k]));
    }
  }
  return worst;
}

}  // namespace qreli::oracle
