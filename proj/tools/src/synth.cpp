// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#include "synth.hpp"

#include <cmath>
#include <numbers>
#include <vector>

#include "qreli/error.hpp"
#include "qreli/rng.hpp"

namespace qreli::cli {

namespace {

std::vector<double> unit_gaussian(Rng& rng, std::size_t d) {
  std::vector<double> v(d);
  double sq = 0.0;
  for (double& x : v) {
    x = rng.normal();
    sq += x * x;
  }
  const double n = std::sqrt(sq);
  for (double& x : v) x /= n;
  return v;
}

}  // namespace

GaussianTask::Split parse_split(const std::string& name) {
  if (name == "train") return GaussianTask::Split::Train;
  if (name == "test") return GaussianTask::Split::Test;
  if (name == "shift") return GaussianTask::Split::Shift;
  if (name == "ood") return GaussianTask::Split::Ood;
  throw Error(ErrorKind::InvalidArgument, "unknown split '" + name + "' (train, test, shift, ood)");
}

zeroshot::EmbeddingSet GaussianTask::sample(std::size_t n, Split split) const {
  if (classes < 2 || dim < 2 || n == 0) {
    throw Error(ErrorKind::InvalidArgument, "synthetic task needs >= 2 classes, dim >= 2, n >= 1");
  }
  const Rng root(seed);
  Rng proto_rng = root.fork(1);
  Rng mix_rng = root.fork(2);
  std::vector<std::vector<double>> protos;
  for (std::size_t c = 0; c < classes; ++c) protos.push_back(unit_gaussian(proto_rng, dim));
  std::vector<double> M(dim * dim);
  const double g = mixing / std::sqrt(static_cast<double>(dim));
  for (std::size_t i = 0; i < dim; ++i) {
    for (std::size_t j = 0; j < dim; ++j) M[i * dim + j] = (i == j ? 1.0 : 0.0) + g * mix_rng.normal();
  }

  std::vector<std::vector<double>> sources = protos;
  double s = sigma;
  std::uint64_t stream = 10;
  switch (split) {
    case Split::Train: stream = 10; break;
    case Split::Test: stream = 11; break;
    case Split::Shift:
      stream = 12;
      s = 2.0 * sigma;
      break;
    case Split::Ood: {
      stream = 13;
      Rng ood_rng = root.fork(3);
      for (auto& p : sources) p = unit_gaussian(ood_rng, dim);
      break;
    }
  }
  Rng rng = root.fork(stream);

  std::vector<float> image(n * dim);
  std::vector<std::int64_t> labels(n);
  std::vector<double> z(dim);
  const double noise = s / std::sqrt(static_cast<double>(dim));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % classes;
    for (std::size_t j = 0; j < dim; ++j) z[j] = sources[c][j] + noise * rng.normal();
    double sq = 0.0;
    std::vector<double> x(dim, 0.0);
    for (std::size_t r = 0; r < dim; ++r) {
      for (std::size_t j = 0; j < dim; ++j) x[r] += M[r * dim + j] * z[j];
      sq += x[r] * x[r];
    }
    const double norm = std::sqrt(sq);
    for (std::size_t r = 0; r < dim; ++r) image[i * dim + r] = static_cast<float>(x[r] / norm);
    labels[i] = split == Split::Ood ? -1 : static_cast<std::int64_t>(c);
  }
  std::vector<float> text(classes * dim);
  for (std::size_t c = 0; c < classes; ++c) {
    for (std::size_t j = 0; j < dim; ++j) text[c * dim + j] = static_cast<float>(protos[c][j]);
  }
  zeroshot::EmbeddingSet e;
  e.image = Tensor::f32({n, dim}, std::move(image));
  e.labels = Tensor::i64({n}, std::move(labels));
  e.class_text = cosine_normalize(Tensor::f32({classes, dim}, std::move(text)));
  e.logit_scale = 100.0f;
  for (std::size_t c = 0; c < classes; ++c) e.names.push_back("class" + std::to_string(c));
  return e;
}

spectral::FeatureMapSet synth_feature_maps(std::size_t n, spectral::Grid grid, std::size_t dim,
                                           std::uint64_t seed) {
  if (n == 0 || dim == 0 || grid.cells() == 0) {
    throw Error(ErrorKind::InvalidArgument, "feature maps need n, dim and grid cells >= 1");
  }
  Rng rng(seed);
  const std::size_t t = grid.cells();
  std::vector<float> tokens(n * t * dim);
  constexpr int kWaves = 3;
  const double two_pi = 2.0 * std::numbers::pi;
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t c = 0; c < dim; ++c) {
      double fy[kWaves], fx[kWaves], ph[kWaves], amp[kWaves];
      for (int k = 0; k < kWaves; ++k) {
        fy[k] = static_cast<double>(rng.below(grid.h / 2 + 1));
        fx[k] = static_cast<double>(rng.below(grid.w / 2 + 1));
        ph[k] = rng.uniform(0.0, two_pi);
        amp[k] = rng.normal() / (1.0 + fy[k] + fx[k]);
      }
      const double offset = rng.normal(0.0, 0.5);
      for (std::size_t y = 0; y < grid.h; ++y) {
        for (std::size_t x = 0; x < grid.w; ++x) {
          double v = offset + 0.05 * rng.normal();
          for (int k = 0; k < kWaves; ++k) {
            v += amp[k] * std::cos(two_pi * (fy[k] * y / grid.h + fx[k] * x / grid.w) + ph[k]);
          }
          tokens[(s * t + y * grid.w + x) * dim + c] = static_cast<float>(v);
        }
      }
    }
  }
  return spectral::FeatureMapSet{Tensor::f32({n, t, dim}, std::move(tokens)), grid};
}

}  // namespace qreli::cli
