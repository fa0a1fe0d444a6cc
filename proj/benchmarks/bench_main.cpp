// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "qreli/ood.hpp"
#include "qreli/qat.hpp"
#include "qreli/quantize.hpp"
#include "qreli/rng.hpp"
#include "qreli/spectral.hpp"

namespace {

using namespace qreli;

void BM_Auroc(benchmark::State& st) {
  Rng rng(1);
  const auto n = static_cast<std::size_t>(st.range(0));
  std::vector<double> id(n), ood(n);
  for (double& v : id) v = rng.normal(1.0, 1.0);
  for (double& v : ood) v = rng.normal();
  for (auto _ : st) benchmark::DoNotOptimize(ood::auroc(id, ood));
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(2 * n));
}
BENCHMARK(BM_Auroc)->Arg(1000)->Arg(10000)->Arg(100000);

void BM_FakeQuantize(benchmark::State& st) {
  Rng rng(2);
  const Tensor t = rng.normal_tensor({512, 512});
  quant::QuantConfig cfg;
  cfg.bits = static_cast<int>(st.range(0));
  const quant::QuantParams qp = quant::compute_qparams(t, cfg);
  for (auto _ : st) benchmark::DoNotOptimize(quant::fake_quantize(t, qp));
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(t.size()));
}
BENCHMARK(BM_FakeQuantize)->Arg(4)->Arg(8);

void BM_Spectrum(benchmark::State& st) {
  Rng rng(3);
  const auto side = static_cast<std::size_t>(st.range(0));
  const spectral::Grid g{side, side};
  const spectral::FeatureMapSet f{rng.normal_tensor({8, g.cells(), 64}), g};
  for (auto _ : st) benchmark::DoNotOptimize(spectral::spectrum(f));
}
BENCHMARK(BM_Spectrum)->Arg(7)->Arg(14)->Arg(16);

void BM_QatStep(benchmark::State& st) {
  Rng rng(4);
  qat::QatConfig cfg;
  const auto d = static_cast<std::size_t>(st.range(0));
  cfg.layer_dims = {d, d};
  cfg.bits_w = 4;
  cfg.bits_a = 8;
  cfg.use_lsq = true;
  qat::QatState s = qat::init_state(cfg);
  const Tensor x = rng.normal_tensor({cfg.batch, d});
  for (auto _ : st) {
    const qat::ForwardResult f = qat::forward(s, cfg, x);
    const qat::Gradients g = qat::backward(s, cfg, f.tape, f.y);
    qat::adamw_step(s, g, cfg);
  }
}
BENCHMARK(BM_QatStep)->Arg(64)->Arg(512);

}  // namespace

BENCHMARK_MAIN();
