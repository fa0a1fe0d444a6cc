// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>

#include "qreli/spectral.hpp"
#include "qreli/zeroshot.hpp"

namespace qreli::cli {

/// Seeded C-class Gaussian embedding task. Class prototypes mu_c are unit
/// vectors; a sample of class c is normalize(M (mu_c + sigma n / sqrt(D)))
/// with a fixed random mixing matrix M = I + mixing * G / sqrt(D). The class
/// text anchors are the unmixed prototypes, so a head has to undo M.
struct GaussianTask {
  std::size_t classes = 10;
  std::size_t dim = 32;
  double sigma = 0.5;
  double mixing = 1.0;
  std::uint64_t seed = 0;

  enum class Split { Train, Test, Shift, Ood };

  /// `n` rows, labels cycling 0..C-1. Train/Test/Shift/Ood draw from disjoint
  /// streams; Shift doubles sigma; Ood samples from unseen prototypes and is
  /// labeled -1 while keeping the ID class text.
  zeroshot::EmbeddingSet sample(std::size_t n, Split split) const;
};

GaussianTask::Split parse_split(const std::string& name);

/// Smooth random patch-token maps [n x (h*w) x dim] as a sum of a few random
/// cosines per channel plus noise.
spectral::FeatureMapSet synth_feature_maps(std::size_t n, spectral::Grid grid, std::size_t dim,
                                           std::uint64_t seed);

}  // namespace qreli::cli
