// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "qreli/zeroshot.hpp"

namespace qreli::ood {

using zeroshot::EmbeddingSet;
using zeroshot::LogitSet;

// Every scorer follows the same orientation: a higher score means "more
// in-distribution". Energy is reported as negated energy for that reason.
enum class ScorerKind { MSP, Energy, MCM, GenericNegative, NegLabel };

std::string_view scorer_name(ScorerKind kind) noexcept;
/// Accepts msp, energy, mcm, generic-negative (or genneg), neglabel.
ScorerKind parse_scorer(std::string_view name);

struct ScorerConfig {
  ScorerKind kind = ScorerKind::MSP;
  double temperature = 1.0;  // T for Energy
  double tau = 0.01;         // similarity temperature for MCM and negative-based scorers
  std::optional<Tensor> negative_text;  // [M x D], unit-norm rows

  bool needs_embeddings() const noexcept {
    return kind == ScorerKind::MCM || kind == ScorerKind::GenericNegative ||
           kind == ScorerKind::NegLabel;
  }
  void validate() const;
};

/// Scores from logits; only MSP and Energy are defined on logits alone.
std::vector<double> score(const ScorerConfig& cfg, const LogitSet& logits);

/// Scores from embeddings. MSP and Energy use the zero-shot logits; MCM and
/// the negative-based scorers use raw cosine similarities divided by tau.
std::vector<double> score(const ScorerConfig& cfg, const EmbeddingSet& e);

/// Exact Mann-Whitney AUROC with midranks: P(id > ood) + 0.5 P(id == ood).
/// O((N+M) log(N+M)). Throws EmptySide.
double auroc(std::span<const double> id_scores, std::span<const double> ood_scores);

/// Fraction of OOD scores >= theta, where theta is the ceil(tpr*N)-th largest
/// ID score. Throws EmptySide.
double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores,
                  double tpr = 0.95);

struct OodReport {
  double auroc = 0.0;
  double fpr_at_95tpr = 0.0;
  std::size_t n_id = 0;
  std::size_t n_ood = 0;
};

OodReport evaluate(std::span<const double> id_scores, std::span<const double> ood_scores);

}  // namespace qreli::ood
