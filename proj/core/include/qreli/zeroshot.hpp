// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "qreli/bundle.hpp"
#include "qreli/tensor.hpp"

namespace qreli::zeroshot {

/// Image embeddings with labels and the frozen class-text anchors.
///
/// Bundle layout: entries "image" [N x D] f32, "labels" [N] i64 (-1 =
/// unlabeled), "class_text" [C x D] f32; meta "logit_scale" (number),
/// optional "prenormalized" (bool) and "class_names" (array of strings).
struct EmbeddingSet {
  Tensor image;
  Tensor labels;
  Tensor class_text;
  float logit_scale = 100.0f;
  std::vector<std::string> names;

  std::size_t rows() const { return image.dim(0); }
  std::size_t classes() const { return class_text.dim(0); }
  std::size_t embed_dim() const { return image.dim(1); }

  /// Checks shapes, label range and finiteness. Throws DimensionMismatch or
  /// InvalidArgument.
  void validate() const;

  /// Ingests a bundle. Rows are L2-normalized unless meta "prenormalized" is
  /// true; the returned set always satisfies the unit-norm invariant.
  static EmbeddingSet from_bundle(const TensorBundle& bundle);
  TensorBundle to_bundle() const;
};

struct LogitSet {
  Tensor logits;  // [N x C]
  Tensor labels;  // [N] i64

  std::size_t rows() const { return logits.dim(0); }
  std::size_t classes() const { return logits.dim(1); }
  std::size_t labeled_rows() const;

  void validate() const;

  /// Bundle layout: entries "logits" [N x C] f32 and "labels" [N] i64.
  static LogitSet from_bundle(const TensorBundle& bundle);
  TensorBundle to_bundle() const;
};

/// logits[i, c] = logit_scale * <image_i, text_c>.
LogitSet zero_shot_logits(const EmbeddingSet& e);

/// Argmax with ties resolved to the lowest index.
std::size_t argmax(std::span<const float> row) noexcept;

/// Top-1 accuracy over labeled rows, in [0, 1]. Throws NoLabeledRows.
double accuracy(const LogitSet& l);

/// Accuracy drop acc_normal - acc_counter in percentage points. Inputs may be
/// fractions (both <= 1) or percentages (both > 1); mixing throws MixedScale.
double vulnerability(double acc_normal, double acc_counter);

}  // namespace qreli::zeroshot
