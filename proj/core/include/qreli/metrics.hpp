// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "qreli/zeroshot.hpp"

namespace qreli::metrics {

using zeroshot::LogitSet;

inline constexpr std::size_t kDefaultBins = 15;
inline constexpr double kProbabilityFloor = 1e-12;

struct SoftmaxOutput {
  std::vector<double> probs;  // row-major N x C
  std::vector<double> conf;   // max probability per row
  std::vector<std::int64_t> pred;
  std::size_t classes = 0;
};

/// Row-wise softmax after subtracting the row max.
SoftmaxOutput softmax_confidences(const LogitSet& l);

/// Logits divided by a temperature, as a new set (labels shared).
LogitSet scale_logits(const LogitSet& l, double inv_temperature);

struct ReliabilityBin {
  double lo = 0.0;
  double hi = 0.0;
  std::size_t count = 0;
  double mean_confidence = 0.0;
  double empirical_accuracy = 0.0;
};

struct ReliabilityReport {
  std::vector<ReliabilityBin> bins;
  double ece = 0.0;
  double nll = 0.0;
  std::size_t n_bins = kDefaultBins;
  std::size_t n = 0;  // labeled rows
};

/// Index of the right-closed equal-width bin (k/n, (k+1)/n] holding `conf`;
/// confidence 0 lands in bin 0 and 1.0 in the last bin.
std::size_t confidence_bin(double conf, std::size_t n_bins) noexcept;

/// Expected calibration error and NLL over labeled rows. Throws NoLabeledRows.
ReliabilityReport ece(const LogitSet& l, std::size_t n_bins = kDefaultBins);

/// Mean -log p(true class), probabilities floored at 1e-12. Labeled rows only.
double nll(const LogitSet& l, double inv_temperature = 1.0);

struct TemperatureFit {
  double t_star = 1.0;
  double nll_before = 0.0;
  double nll_after = 0.0;
};

/// Single-temperature fit minimizing NLL(logits / t) over [t_lo, t_hi] with a
/// golden-section search on log t (relative bracket width 1e-4). The interior
/// optimum competes with both endpoints and t = 1; ties go to the smaller t,
/// so the fit never raises NLL. Needs at least two labeled rows.
TemperatureFit fit_temperature(const LogitSet& l, double t_lo = 0.01, double t_hi = 100.0);

struct BinShiftGroup {
  std::size_t source_bin = 0;
  std::size_t count = 0;
  double mean_conf_before = 0.0;
  double mean_conf_after = 0.0;
  double mean_acc_before = 0.0;
  double mean_acc_after = 0.0;
};

struct BinShiftReport {
  std::vector<BinShiftGroup> groups;
  std::size_t n_bins = kDefaultBins;
};

/// Follows the sample groups fixed by the "before" model's confidence bins and
/// reports both models' mean confidence and accuracy on those same index sets.
/// Every row is counted; accuracy means use the labeled rows of each group.
BinShiftReport bin_shift(const LogitSet& before, const LogitSet& after,
                         std::size_t n_bins = kDefaultBins);

}  // namespace qreli::metrics
