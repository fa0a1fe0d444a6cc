// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#include "qreli/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace qreli::metrics {

namespace {

// log(sum(exp(beta * z))) and the row max, with the max subtracted first.
double row_logsumexp(std::span<const float> z, double beta) {
  double m = -INFINITY;
  for (float v : z) m = std::max(m, beta * v);
  double s = 0.0;
  for (float v : z) s += std::exp(beta * v - m);
  return m + std::log(s);
}

}  // namespace

SoftmaxOutput softmax_confidences(const LogitSet& l) {
  l.validate();
  const std::size_t n = l.rows();
  const std::size_t c = l.classes();
  SoftmaxOutput out;
  out.classes = c;
  out.probs.resize(n * c);
  out.conf.resize(n);
  out.pred.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto z = l.logits.row(i);
    const std::size_t best = zeroshot::argmax(z);
    const double m = z[best];
    double sum = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      out.probs[i * c + k] = std::exp(z[k] - m);
      sum += out.probs[i * c + k];
    }
    for (std::size_t k = 0; k < c; ++k) out.probs[i * c + k] /= sum;
    out.conf[i] = out.probs[i * c + best];
    out.pred[i] = static_cast<std::int64_t>(best);
  }
  return out;
}

LogitSet scale_logits(const LogitSet& l, double inv_temperature) {
  LogitSet out = l;
  for (float& v : out.logits.values()) v = static_cast<float>(v * inv_temperature);
  return out;
}

std::size_t confidence_bin(double conf, std::size_t n_bins) noexcept {
  const double nb = static_cast<double>(n_bins);
  auto k = static_cast<std::ptrdiff_t>(std::ceil(conf * nb)) - 1;
  k = std::clamp<std::ptrdiff_t>(k, 0, static_cast<std::ptrdiff_t>(n_bins) - 1);
  // Settle floating-point edge cases against the exact boundaries k/n.
  while (k > 0 && conf <= static_cast<double>(k) / nb) --k;
  while (k + 1 < static_cast<std::ptrdiff_t>(n_bins) && conf > static_cast<double>(k + 1) / nb) ++k;
  return static_cast<std::size_t>(k);
}

double nll(const LogitSet& l, double inv_temperature) {
  const auto y = l.labels.labels();
  double total = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0) continue;
    const auto z = l.logits.row(i);
    const double log_p = inv_temperature * z[static_cast<std::size_t>(y[i])] -
                         row_logsumexp(z, inv_temperature);
    total += -std::max(log_p, std::log(kProbabilityFloor));
    ++n;
  }
  if (n == 0) throw Error(ErrorKind::NoLabeledRows, "NLL needs labeled rows");
  return total / static_cast<double>(n);
}

ReliabilityReport ece(const LogitSet& l, std::size_t n_bins) {
  if (n_bins == 0) throw Error(ErrorKind::InvalidArgument, "n_bins must be positive");
  const SoftmaxOutput sm = softmax_confidences(l);
  const auto y = l.labels.labels();
  const std::size_t c = sm.classes;

  ReliabilityReport r;
  r.n_bins = n_bins;
  r.bins.resize(n_bins);
  std::vector<double> conf_sum(n_bins, 0.0);
  std::vector<double> correct(n_bins, 0.0);
  double nll_sum = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0) continue;
    ++r.n;
    const std::size_t b = confidence_bin(sm.conf[i], n_bins);
    ++r.bins[b].count;
    conf_sum[b] += sm.conf[i];
    correct[b] += sm.pred[i] == y[i] ? 1.0 : 0.0;
    const double p_true = sm.probs[i * c + static_cast<std::size_t>(y[i])];
    nll_sum += -std::log(std::max(p_true, kProbabilityFloor));
  }
  if (r.n == 0) throw Error(ErrorKind::NoLabeledRows, "ECE needs labeled rows");

  const double total = static_cast<double>(r.n);
  for (std::size_t b = 0; b < n_bins; ++b) {
    auto& bin = r.bins[b];
    bin.lo = static_cast<double>(b) / static_cast<double>(n_bins);
    bin.hi = static_cast<double>(b + 1) / static_cast<double>(n_bins);
    if (bin.count == 0) continue;
    const double cnt = static_cast<double>(bin.count);
    bin.mean_confidence = conf_sum[b] / cnt;
    bin.empirical_accuracy = correct[b] / cnt;
    r.ece += (cnt / total) * std::fabs(bin.empirical_accuracy - bin.mean_confidence);
  }
  r.nll = nll_sum / total;
  return r;
}

TemperatureFit fit_temperature(const LogitSet& l, double t_lo, double t_hi) {
  l.validate();
  if (!(t_lo > 0.0) || !(t_hi > t_lo)) {
    throw Error(ErrorKind::InvalidArgument, "need 0 < t_lo < t_hi");
  }
  if (l.labeled_rows() < 2) {
    throw Error(ErrorKind::NoLabeledRows, "temperature fitting needs at least two labeled rows");
  }
  const auto objective = [&](double t) { return nll(l, 1.0 / t); };

  // Golden section on u = log t; NLL is convex in 1/t, hence unimodal in u.
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = std::log(t_lo);
  double b = std::log(t_hi);
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = objective(std::exp(c));
  double fd = objective(std::exp(d));
  // Bracket [e^a, e^b] has relative width e^(b-a) - 1.
  while (std::expm1(b - a) > 1e-4) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - inv_phi * (b - a);
      fc = objective(std::exp(c));
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + inv_phi * (b - a);
      fd = objective(std::exp(d));
    }
  }

  std::vector<double> candidates = {t_lo, std::exp(0.5 * (a + b)), t_hi};
  if (t_lo <= 1.0 && 1.0 <= t_hi) candidates.push_back(1.0);
  std::sort(candidates.begin(), candidates.end());

  TemperatureFit fit;
  fit.nll_before = objective(1.0);
  fit.nll_after = INFINITY;
  for (double t : candidates) {
    const double f = objective(t);
    if (f < fit.nll_after) {  // strict: ties keep the smaller t
      fit.nll_after = f;
      fit.t_star = t;
    }
  }
  return fit;
}

BinShiftReport bin_shift(const LogitSet& before, const LogitSet& after, std::size_t n_bins) {
  if (n_bins == 0) throw Error(ErrorKind::InvalidArgument, "n_bins must be positive");
  before.validate();
  after.validate();
  if (before.rows() != after.rows() || before.classes() != after.classes()) {
    throw Error(ErrorKind::LengthMismatch, "before/after logit sets differ in shape");
  }
  const auto yb = before.labels.labels();
  const auto ya = after.labels.labels();
  if (!std::equal(yb.begin(), yb.end(), ya.begin(), ya.end())) {
    throw Error(ErrorKind::LengthMismatch, "before/after logit sets carry different labels");
  }
  const SoftmaxOutput sb = softmax_confidences(before);
  const SoftmaxOutput sa = softmax_confidences(after);

  BinShiftReport r;
  r.n_bins = n_bins;
  r.groups.resize(n_bins);
  std::vector<std::size_t> labeled(n_bins, 0);
  for (std::size_t i = 0; i < yb.size(); ++i) {
    const std::size_t b = confidence_bin(sb.conf[i], n_bins);
    auto& g = r.groups[b];
    ++g.count;
    g.mean_conf_before += sb.conf[i];
    g.mean_conf_after += sa.conf[i];
    if (yb[i] >= 0) {
      ++labeled[b];
      g.mean_acc_before += sb.pred[i] == yb[i] ? 1.0 : 0.0;
      g.mean_acc_after += sa.pred[i] == yb[i] ? 1.0 : 0.0;
    }
  }
  for (std::size_t b = 0; b < n_bins; ++b) {
    auto& g = r.groups[b];
    g.source_bin = b;
    if (g.count > 0) {
      g.mean_conf_before /= static_cast<double>(g.count);
      g.mean_conf_after /= static_cast<double>(g.count);
    }
    if (labeled[b] > 0) {
      g.mean_acc_before /= static_cast<double>(labeled[b]);
      g.mean_acc_after /= static_cast<double>(labeled[b]);
    }
  }
  return r;
}

}  // namespace qreli::metrics
