// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#include "qreli/spectral.hpp"

#include <fftw3.h>

#include <cmath>
#include <memory>
#include <mutex>
#include <regex>

#include "qreli/parallel.hpp"

namespace qreli::spectral {

Grid parse_grid(const std::string& text) {
  static const std::regex re(R"(^\s*(\d+)\s*[xX]\s*(\d+)\s*$)");
  std::smatch m;
  if (!std::regex_match(text, m, re)) {
    throw Error(ErrorKind::InvalidArgument, "grid must look like HxW, got '" + text + "'");
  }
  Grid g{std::stoul(m[1].str()), std::stoul(m[2].str())};
  if (g.h == 0 || g.w == 0) throw Error(ErrorKind::InvalidArgument, "grid extents must be positive");
  return g;
}

std::string format_grid(Grid g) { return std::to_string(g.h) + "x" + std::to_string(g.w); }

void FeatureMapSet::validate() const {
  if (tokens.rank() != 3 || tokens.dtype() != DType::F32) {
    throw Error(ErrorKind::DimensionMismatch, "tokens must be a rank-3 f32 tensor [N x T x D]");
  }
  if (tokens.dim(1) != grid.cells()) {
    throw Error(ErrorKind::GridMismatch, "token count " + std::to_string(tokens.dim(1)) +
                                             " does not match grid " + format_grid(grid));
  }
  if (!tokens.all_finite()) throw Error(ErrorKind::NonFinite, "feature maps hold non-finite values");
}

FeatureMapSet FeatureMapSet::from_bundle(const TensorBundle& bundle,
                                         std::optional<Grid> grid_override) {
  FeatureMapSet f;
  f.tokens = bundle.at("tokens");
  if (grid_override) {
    f.grid = *grid_override;
  } else if (auto g = bundle.meta_string("grid")) {
    f.grid = parse_grid(*g);
  } else {
    throw Error(ErrorKind::GridMismatch, "feature-map bundle has no grid; pass one explicitly");
  }
  f.validate();
  return f;
}

namespace {

struct FftwFree {
  void operator()(fftw_complex* p) const noexcept { fftw_free(p); }
};
using FftwBuffer = std::unique_ptr<fftw_complex[], FftwFree>;

FftwBuffer make_buffer(std::size_t n) {
  return FftwBuffer(static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n)));
}

// FFTW's planner is not thread-safe; execution with new arrays is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

class Plan {
 public:
  explicit Plan(Grid g) {
    auto in = make_buffer(g.cells());
    auto out = make_buffer(g.cells());
    std::lock_guard lock(planner_mutex());
    plan_ = fftw_plan_dft_2d(static_cast<int>(g.h), static_cast<int>(g.w), in.get(), out.get(),
                             FFTW_FORWARD, FFTW_ESTIMATE);
  }
  ~Plan() {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan_);
  }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;

  void execute(fftw_complex* in, fftw_complex* out) const { fftw_execute_dft(plan_, in, out); }

 private:
  fftw_plan plan_ = nullptr;
};

}  // namespace

SpectrumMap spectrum(const FeatureMapSet& f) {
  f.validate();
  const std::size_t n = f.tokens.dim(0);
  const std::size_t t = f.tokens.dim(1);
  const std::size_t d = f.tokens.dim(2);
  const Grid g = f.grid;
  const auto x = f.tokens.values();

  std::vector<std::vector<double>> per_sample(n, std::vector<double>(t, 0.0));
  if (n > 0 && d > 0) {
    const Plan plan(g);
    parallel_for(n, [&](std::size_t s) {
      auto in = make_buffer(t);
      auto out = make_buffer(t);
      auto& acc = per_sample[s];
      for (std::size_t c = 0; c < d; ++c) {
        // The channel mean goes straight to the DC bin; the transform only sees
        // the zero-mean remainder, so a constant map leaves every other bin at 0.
        double sum = 0.0;
        for (std::size_t k = 0; k < t; ++k) sum += x[(s * t + k) * d + c];
        const double mean = sum / static_cast<double>(t);
        for (std::size_t k = 0; k < t; ++k) {
          in[k][0] = x[(s * t + k) * d + c] - mean;
          in[k][1] = 0.0;
        }
        plan.execute(in.get(), out.get());
        out[0][0] = sum;
        out[0][1] = 0.0;
        for (std::size_t k = 0; k < t; ++k) acc[k] += std::hypot(out[k][0], out[k][1]);
      }
      for (double& v : acc) v /= static_cast<double>(d);
    });
  }

  std::vector<double> mean(t, 0.0);
  for (const auto& acc : per_sample) {
    for (std::size_t k = 0; k < t; ++k) mean[k] += acc[k];
  }
  std::vector<float> shifted(t, 0.0f);
  for (std::size_t i = 0; i < g.h; ++i) {
    for (std::size_t j = 0; j < g.w; ++j) {
      const std::size_t si = (i + g.h / 2) % g.h;
      const std::size_t sj = (j + g.w / 2) % g.w;
      const double v = n > 0 ? mean[i * g.w + j] / static_cast<double>(n) : 0.0;
      shifted[si * g.w + sj] = static_cast<float>(v);
    }
  }
  return SpectrumMap{Tensor::f32({g.h, g.w}, std::move(shifted)), g};
}

RseMap rse(const SpectrumMap& base, const SpectrumMap& quant, double epsilon) {
  if (!(base.grid == quant.grid) || base.mag.shape() != quant.mag.shape()) {
    throw Error(ErrorKind::GridMismatch, "spectra use different grids");
  }
  if (!(epsilon > 0.0)) throw Error(ErrorKind::InvalidArgument, "epsilon must be positive");
  const auto b = base.mag.values();
  const auto q = quant.mag.values();
  std::vector<float> out(b.size());
  for (std::size_t k = 0; k < b.size(); ++k) {
    const double num = std::fabs(static_cast<double>(q[k]) - b[k]);
    out[k] = static_cast<float>(num / (static_cast<double>(b[k]) + epsilon));
  }
  return RseMap{Tensor::f32(base.mag.shape(), std::move(out)), base.grid, epsilon};
}

BandSummary band_energy(const Tensor& centred_map) {
  require_matrix(centred_map, "band_energy input");
  const std::size_t h = centred_map.dim(0);
  const std::size_t w = centred_map.dim(1);
  const double ci = static_cast<double>(h / 2);
  const double cj = static_cast<double>(w / 2);
  const auto radius = [&](std::size_t i, std::size_t j) {
    return std::hypot(static_cast<double>(i) - ci, static_cast<double>(j) - cj);
  };
  double r_max = 0.0;
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) r_max = std::max(r_max, radius(i, j));
  }
  double sum[3] = {0.0, 0.0, 0.0};
  std::size_t count[3] = {0, 0, 0};
  const auto v = centred_map.values();
  for (std::size_t i = 0; i < h; ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double r = r_max > 0.0 ? radius(i, j) / r_max : 0.0;
      const int band = r < 1.0 / 3.0 ? 0 : (r < 2.0 / 3.0 ? 1 : 2);
      sum[band] += v[i * w + j];
      ++count[band];
    }
  }
  const auto mean = [&](int b) { return count[b] ? sum[b] / static_cast<double>(count[b]) : 0.0; };
  return BandSummary{mean(0), mean(1), mean(2)};
}

}  // namespace qreli::spectral
