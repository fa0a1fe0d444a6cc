// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

// One seeded metric-equivalence instance: library ECE/NLL/AUROC/FPR@95 against
// the brute-force loops, plus AUROC symmetry and monotone-transform invariance.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "metric_oracles.hpp"
#include "qreli/metrics.hpp"
#include "qreli/ood.hpp"
#include "random_cases.hpp"

namespace qreli::oracle {

inline constexpr double kMetricTol = 1e-12;

struct MetricInstanceResult {
  double ece_err = 0.0;
  double nll_err = 0.0;
  double auroc_err = 0.0;
  double fpr_err = 0.0;
  double symmetry_err = 0.0;
  double monotone_err = 0.0;  // AUROC and FPR under a strictly increasing map

  bool pass() const {
    return ece_err <= kMetricTol && nll_err <= kMetricTol && auroc_err <= kMetricTol &&
           fpr_err <= kMetricTol && symmetry_err <= kMetricTol && monotone_err == 0.0;
  }
  std::string describe() const {
    return "ece " + std::to_string(ece_err) + " nll " + std::to_string(nll_err) + " auroc " +
           std::to_string(auroc_err) + " fpr " + std::to_string(fpr_err) + " sym " +
           std::to_string(symmetry_err) + " mono " + std::to_string(monotone_err);
  }
};

inline MetricInstanceResult run_metric_instance(std::uint64_t seed) {
  Rng rng(seed);
  MetricInstanceResult r;

  const std::size_t n = 1 + rng.below(200);
  const std::size_t c = 2 + rng.below(19);
  const std::size_t bins = rng.below(3) == 0 ? 1 + rng.below(30) : metrics::kDefaultBins;
  const zeroshot::LogitSet l = random_logit_set(rng, n, c);
  const std::vector<float> z(l.logits.values().begin(), l.logits.values().end());
  const std::vector<std::int64_t> y(l.labels.labels().begin(), l.labels.labels().end());
  const Probe p = probe(z, y, c);
  const metrics::ReliabilityReport rep = metrics::ece(l, bins);
  r.ece_err = std::fabs(rep.ece - naive_ece(p, bins));
  r.nll_err = std::fabs(rep.nll - naive_nll(p));

  const std::size_t n_id = 1 + rng.below(200);
  const std::size_t n_ood = 1 + rng.below(200);
  const std::size_t levels = rng.below(3) == 0 ? 1 + rng.below(8) : 0;
  const std::vector<double> id = random_scores(rng, n_id, rng.uniform(0.0, 2.0), levels);
  const std::vector<double> od = random_scores(rng, n_ood, 0.0, levels);
  const double a = ood::auroc(id, od);
  r.auroc_err = std::fabs(a - naive_auroc(id, od));
  r.fpr_err = std::fabs(ood::fpr_at_tpr(id, od, 0.95) - naive_fpr(id, od));
  r.symmetry_err = std::fabs(a + ood::auroc(od, id) - 1.0);

  // exp(x) + 3x is strictly increasing and keeps ties tied.
  const auto f = [](double v) { return std::exp(v) + 3.0 * v; };
  std::vector<double> id_t(id), od_t(od);
  for (double& v : id_t) v = f(v);
  for (double& v : od_t) v = f(v);
  r.monotone_err = std::max(std::fabs(ood::auroc(id_t, od_t) - a),
                            std::fabs(ood::fpr_at_tpr(id_t, od_t) - ood::fpr_at_tpr(id, od)));
  return r;
}

}  // namespace qreli::oracle
