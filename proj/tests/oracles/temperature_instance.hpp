// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

// One seeded temperature-fitting instance. The refit property needs an NLL
// minimizer inside the search bracket: when t* lands on a bracket end (for
// example every labeled row already correct, where sharper is always better)
// the set is redrawn and the redraw is counted.

#pragma once

#include <cmath>

#include "qreli/metrics.hpp"
#include "random_cases.hpp"

namespace qreli::oracle {

inline constexpr double kRefitTol = 1e-2;

struct TemperatureInstanceResult {
  double t_star = 1.0;
  double t_refit = 1.0;
  bool nll_not_increased = true;
  bool accuracy_unchanged = true;
  int redraws = 0;  // sets skipped because t* sat on a bracket end

  bool pass() const {
    return nll_not_increased && accuracy_unchanged && std::fabs(t_refit - 1.0) <= kRefitTol;
  }
};

inline TemperatureInstanceResult run_temperature_instance(std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = 50 + rng.below(451);
  const std::size_t c = 2 + rng.below(19);

  TemperatureInstanceResult r;
  zeroshot::LogitSet l = random_logit_set(rng, n, c);
  metrics::TemperatureFit fit = metrics::fit_temperature(l);
  while (!(fit.t_star > 0.01 && fit.t_star < 100.0)) {
    ++r.redraws;
    l = random_logit_set(rng, n, c);
    fit = metrics::fit_temperature(l);
  }
  r.t_star = fit.t_star;
  r.nll_not_increased = fit.nll_after <= fit.nll_before;
  const zeroshot::LogitSet scaled = metrics::scale_logits(l, 1.0 / fit.t_star);
  r.accuracy_unchanged = zeroshot::accuracy(scaled) == zeroshot::accuracy(l);
  r.t_refit = metrics::fit_temperature(scaled).t_star;
  return r;
}

}  // namespace qreli::oracle
