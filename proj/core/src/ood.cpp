// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#include "qreli/ood.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "qreli/parallel.hpp"

namespace qreli::ood {

std::string_view scorer_name(ScorerKind kind) noexcept {
  switch (kind) {
    case ScorerKind::MSP: return "msp";
    case ScorerKind::Energy: return "energy";
    case ScorerKind::MCM: return "mcm";
    case ScorerKind::GenericNegative: return "generic-negative";
    case ScorerKind::NegLabel: return "neglabel";
  }
  return "unknown";
}

ScorerKind parse_scorer(std::string_view name) {
  if (name == "msp") return ScorerKind::MSP;
  if (name == "energy") return ScorerKind::Energy;
  if (name == "mcm") return ScorerKind::MCM;
  if (name == "generic-negative" || name == "genneg") return ScorerKind::GenericNegative;
  if (name == "neglabel") return ScorerKind::NegLabel;
  throw Error(ErrorKind::InvalidArgument, "unknown scorer '" + std::string(name) + "'");
}

void ScorerConfig::validate() const {
  if (!(temperature > 0.0) || !(tau > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "scorer temperatures must be positive");
  }
  if (kind == ScorerKind::GenericNegative || kind == ScorerKind::NegLabel) {
    if (!negative_text || negative_text->rank() != 2 || negative_text->dim(0) == 0) {
      throw Error(ErrorKind::MissingNegatives,
                  std::string(scorer_name(kind)) + " needs a non-empty negative text set");
    }
  }
}

namespace {

double logsumexp(std::span<const double> v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

double msp(std::span<const float> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (float v : z) s += std::exp(v - m);
  return 1.0 / s;
}

double energy(std::span<const float> z, double t) {
  std::vector<double> scaled(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) scaled[k] = z[k] / t;
  return t * logsumexp(scaled);
}

std::vector<double> similarities(std::span<const float> img, const Tensor& text, double tau) {
  const std::size_t n = text.dim(0);
  std::vector<double> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const auto t = text.row(k);
    double dot = 0.0;
    for (std::size_t j = 0; j < img.size(); ++j) dot += static_cast<double>(img[j]) * t[j];
    out[k] = dot / tau;
  }
  return out;
}

}  // namespace

std::vector<double> score(const ScorerConfig& cfg, const LogitSet& logits) {
  cfg.validate();
  if (cfg.needs_embeddings()) {
    throw Error(ErrorKind::InvalidArgument,
                std::string(scorer_name(cfg.kind)) + " needs embeddings, not logits");
  }
  require_matrix(logits.logits, "logits");
  const std::size_t n = logits.logits.dim(0);
  std::vector<double> out(n);
  parallel_for(n, [&](std::size_t i) {
    const auto z = logits.logits.row(i);
    out[i] = cfg.kind == ScorerKind::MSP ? msp(z) : energy(z, cfg.temperature);
  });
  return out;
}

std::vector<double> score(const ScorerConfig& cfg, const EmbeddingSet& e) {
  cfg.validate();
  if (!cfg.needs_embeddings()) return score(cfg, zeroshot::zero_shot_logits(e));

  require_matrix(e.image, "image");
  require_matrix(e.class_text, "class_text");
  const std::size_t d = e.image.dim(1);
  if (e.class_text.dim(1) != d) {
    throw Error(ErrorKind::DimensionMismatch, "image and class_text embedding widths differ");
  }
  const bool negatives = cfg.kind != ScorerKind::MCM;
  if (negatives && cfg.negative_text->dim(1) != d) {
    throw Error(ErrorKind::DimensionMismatch, "negative text width differs from image width");
  }

  const std::size_t n = e.image.dim(0);
  std::vector<double> out(n);
  parallel_for(n, [&](std::size_t i) {
    const auto img = e.image.row(i);
    const std::vector<double> id = similarities(img, e.class_text, cfg.tau);
    const double lse_id = logsumexp(id);
    if (!negatives) {
      // max_c softmax(sims / tau) = exp(max - logsumexp)
      out[i] = std::exp(*std::max_element(id.begin(), id.end()) - lse_id);
      return;
    }
    const std::vector<double> neg = similarities(img, *cfg.negative_text, cfg.tau);
    const double lse_neg = logsumexp(neg);
    const double m = std::max(lse_id, lse_neg);
    const double lse_all = m + std::log(std::exp(lse_id - m) + std::exp(lse_neg - m));
    out[i] = std::exp(lse_id - lse_all);
  });
  return out;
}

double auroc(std::span<const double> id_scores, std::span<const double> ood_scores) {
  const std::size_t n = id_scores.size();
  const std::size_t m = ood_scores.size();
  if (n == 0 || m == 0) throw Error(ErrorKind::EmptySide, "AUROC needs ID and OOD scores");

  struct Item {
    double score;
    bool is_id;
  };
  std::vector<Item> all;
  all.reserve(n + m);
  for (double s : id_scores) all.push_back({s, true});
  for (double s : ood_scores) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.score < b.score; });

  // Sum of 1-based midranks of the ID scores.
  double id_rank_sum = 0.0;
  for (std::size_t i = 0; i < all.size();) {
    std::size_t j = i;
    std::size_t id_in_tie = 0;
    while (j < all.size() && all[j].score == all[i].score) {
      id_in_tie += all[j].is_id ? 1 : 0;
      ++j;
    }
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    id_rank_sum += midrank * static_cast<double>(id_in_tie);
    i = j;
  }
  const double nd = static_cast<double>(n);
  const double u = id_rank_sum - nd * (nd + 1.0) / 2.0;
  return u / (nd * static_cast<double>(m));
}

double fpr_at_tpr(std::span<const double> id_scores, std::span<const double> ood_scores,
                  double tpr) {
  const std::size_t n = id_scores.size();
  const std::size_t m = ood_scores.size();
  if (n == 0 || m == 0) throw Error(ErrorKind::EmptySide, "FPR@TPR needs ID and OOD scores");
  if (!(tpr > 0.0 && tpr <= 1.0)) throw Error(ErrorKind::InvalidArgument, "tpr must lie in (0, 1]");

  // The 1e-9 guard keeps products like 0.95 * 20 from ceiling up to 20.
  auto k = static_cast<std::size_t>(std::ceil(tpr * static_cast<double>(n) - 1e-9));
  k = std::clamp<std::size_t>(k, 1, n);
  std::vector<double> sorted(id_scores.begin(), id_scores.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   sorted.end(), std::greater<>());
  const double theta = sorted[k - 1];
  const auto hits = std::count_if(ood_scores.begin(), ood_scores.end(),
                                  [theta](double s) { return s >= theta; });
  return static_cast<double>(hits) / static_cast<double>(m);
}

OodReport evaluate(std::span<const double> id_scores, std::span<const double> ood_scores) {
  OodReport r;
  r.auroc = auroc(id_scores, ood_scores);
  r.fpr_at_95tpr = fpr_at_tpr(id_scores, ood_scores, 0.95);
  r.n_id = id_scores.size();
  r.n_ood = ood_scores.size();
  return r;
}

}  // namespace qreli::ood
