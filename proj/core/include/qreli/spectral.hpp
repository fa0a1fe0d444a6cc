// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <string>

#include "qreli/bundle.hpp"
#include "qreli/tensor.hpp"

namespace qreli::spectral {

struct Grid {
  std::size_t h = 0;
  std::size_t w = 0;

  std::size_t cells() const noexcept { return h * w; }
  friend bool operator==(const Grid&, const Grid&) = default;
};

/// Parses "7x7" / "16x16".
Grid parse_grid(const std::string& text);
std::string format_grid(Grid g);

/// Patch-token feature maps with the class token already removed.
/// Bundle layout: entry "tokens" [N x T x D] f32, meta "grid" ("HxW").
struct FeatureMapSet {
  Tensor tokens;
  Grid grid;

  void validate() const;
  static FeatureMapSet from_bundle(const TensorBundle& bundle,
                                   std::optional<Grid> grid_override = std::nullopt);
};

/// Channel- and sample-averaged DFT magnitude with DC shifted to
/// (h/2, w/2). Stored as an [h x w] tensor.
struct SpectrumMap {
  Tensor mag;
  Grid grid;
};

struct RseMap {
  Tensor rse;
  Grid grid;
  double epsilon = 1e-9;
};

/// Per sample and channel: reshape tokens to the grid, unnormalized 2D DFT,
/// magnitude; then mean over channels and samples, then DC-centering shift.
SpectrumMap spectrum(const FeatureMapSet& f);

/// |S_quant - S_base| / (S_base + epsilon), elementwise.
RseMap rse(const SpectrumMap& base, const SpectrumMap& quant, double epsilon = 1e-9);

struct BandSummary {
  double low = 0.0;
  double mid = 0.0;
  double high = 0.0;
};

/// Mean bin value within radial thirds of the centred map. Radius is the
/// Euclidean distance from the DC bin divided by the largest such distance on
/// the grid; bands are [0, 1/3), [1/3, 2/3), [2/3, 1]. Empty bands report 0.
BandSummary band_energy(const Tensor& centred_map);
inline BandSummary band_energy(const SpectrumMap& m) { return band_energy(m.mag); }
inline BandSummary band_energy(const RseMap& m) { return band_energy(m.rse); }

}  // namespace qreli::spectral
