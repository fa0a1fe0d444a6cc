// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#include "cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <map>
#include <numeric>
#include <optional>
#include <ostream>
#include <set>
#include <system_error>

#include "manifest.hpp"
#include "qreli/bundle.hpp"
#include "qreli/error.hpp"
#include "qreli/metrics.hpp"
#include "qreli/ood.hpp"
#include "qreli/quantize.hpp"
#include "qreli/rng.hpp"
#include "qreli/spectral.hpp"
#include "qreli/zeroshot.hpp"
#include "synth.hpp"
#include "table.hpp"
#include "toml.hpp"

#ifndef QRELI_VERSION
#define QRELI_VERSION "0.0.0"
#endif

namespace qreli::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

std::string_view version() noexcept { return QRELI_VERSION; }

namespace {

struct Context {
  std::ostream& out;
  std::ostream& err;
};

// ---------------------------------------------------------------- helpers

void write_text(const fs::path& path, const std::string& text) {
  write_file_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

std::string manifest_comment(const RunManifest& m) {
  return std::string(kCsvManifestPrefix) + m.to_json().dump();
}

RunManifest start_manifest(const std::string& sub, std::uint64_t seed = 0) {
  RunManifest m;
  m.subcommand = sub;
  m.seed = seed;
  m.version = std::string(version());
  return m;
}

// Outputs must never alias an input file.
void check_outputs(const RunManifest& m, std::initializer_list<std::string> outputs) {
  for (const std::string& o : outputs) {
    if (o.empty()) continue;
    std::error_code ec;
    const fs::path out = fs::weakly_canonical(o, ec);
    for (const InputDigest& in : m.inputs) {
      std::error_code ec2;
      if (!ec && fs::weakly_canonical(in.path, ec2) == out && !ec2) {
        throw Error(ErrorKind::InvalidArgument, "output '" + o + "' would overwrite input --" + in.role);
      }
    }
  }
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    const std::size_t c = s.find(',', pos);
    std::string item = s.substr(pos, c == std::string::npos ? std::string::npos : c - pos);
    if (!item.empty()) out.push_back(item);
    if (c == std::string::npos) break;
    pos = c + 1;
  }
  return out;
}

std::vector<std::size_t> parse_steps(const std::string& s) {
  std::vector<std::size_t> out;
  for (const std::string& item : split_list(s)) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
      v = std::stoull(item, &used);
    } catch (const std::logic_error&) {
      used = 0;
    }
    if (used != item.size() || item[0] == '-') {
      throw Error(ErrorKind::InvalidArgument, "bad checkpoint step '" + item + "'");
    }
    out.push_back(static_cast<std::size_t>(v));
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

zeroshot::LogitSet subset(const zeroshot::LogitSet& l, const std::vector<std::size_t>& rows) {
  const std::size_t c = l.classes();
  std::vector<float> z;
  std::vector<std::int64_t> y;
  z.reserve(rows.size() * c);
  for (std::size_t r : rows) {
    const auto src = l.logits.row(r);
    z.insert(z.end(), src.begin(), src.end());
    y.push_back(l.labels.labels()[r]);
  }
  return {Tensor::f32({rows.size(), c}, std::move(z)), Tensor::i64({rows.size()}, std::move(y))};
}

json reliability_json(const metrics::ReliabilityReport& r) {
  json bins = json::array();
  for (const auto& b : r.bins) {
    bins.push_back({{"lo", b.lo},
                    {"hi", b.hi},
                    {"count", b.count},
                    {"mean_confidence", b.mean_confidence},
                    {"empirical_accuracy", b.empirical_accuracy}});
  }
  return json{{"n", r.n}, {"n_bins", r.n_bins}, {"ece", r.ece}, {"nll", r.nll}, {"bins", bins}};
}

// ---------------------------------------------------------------- quantize

struct QuantizeOpts {
  std::string in, tensor, out;
  int bits = 8;
  bool asymmetric = false;
  std::string granularity = "per-tensor";
  std::size_t axis = 0;
  std::string calibration = "minmax";
  double percentile = 1.0;
  bool verify = false;
};

int cmd_quantize(const QuantizeOpts& o, Context& ctx) {
  quant::QuantConfig qc;
  qc.bits = o.bits;
  qc.symmetric = !o.asymmetric;
  qc.granularity = o.granularity == "per-channel" ? quant::Granularity::PerChannel
                                                  : quant::Granularity::PerTensor;
  qc.axis = o.axis;
  qc.calibration = o.calibration == "percentile" ? quant::Calibration::Percentile
                                                 : quant::Calibration::MinMax;
  qc.percentile = o.percentile;
  qc.validate();

  RunManifest m = start_manifest("quantize");
  m.config = {{"tensor", o.tensor},           {"bits", o.bits},
              {"symmetric", qc.symmetric},    {"granularity", o.granularity},
              {"axis", o.axis},               {"calibration", o.calibration},
              {"percentile", o.percentile},   {"verify", o.verify}};
  m.add_input("in", o.in);
  const std::string verify_path = o.out + ".verify.json";
  check_outputs(m, {o.out, o.verify ? verify_path : std::string()});

  TensorBundle b = read_bundle(o.in);
  const Tensor& t = b.at(o.tensor);
  if (t.dtype() != DType::F32) {
    throw Error(ErrorKind::InvalidArgument, "tensor '" + o.tensor + "' is not f32");
  }
  const quant::QuantParams qp = quant::compute_qparams(t, qc);
  if (qp.degenerate_groups > 0) {
    ctx.err << "warning: " << qp.degenerate_groups
            << " group(s) had a zero range and use scale 1.0\n";
  }
  Tensor q = quant::fake_quantize(t, qp);
  json qmeta{{"tensor", o.tensor},
             {"bits", o.bits},
             {"symmetric", qc.symmetric},
             {"granularity", o.granularity},
             {"scale", qp.scale},
             {"zero_point", qp.zero_point},
             {"qmin", qp.qmin},
             {"qmax", qp.qmax},
             {"degenerate_groups", qp.degenerate_groups}};
  if (qp.channel_axis) qmeta["axis"] = *qp.channel_axis;

  int rc = kExitOk;
  if (o.verify) {
    // Per-channel outputs have one grid per channel; count each group alone
    // and report the largest.
    quant::VerificationReport vr;
    if (qp.channel_axis) {
      const std::size_t axis = *qp.channel_axis;
      std::size_t stride = 1;
      for (std::size_t d = axis + 1; d < q.rank(); ++d) stride *= q.dim(d);
      std::vector<std::vector<float>> groups(q.dim(axis));
      const auto v = q.values();
      for (std::size_t i = 0; i < v.size(); ++i) groups[(i / stride) % groups.size()].push_back(v[i]);
      vr.pass = true;
      for (std::vector<float>& g : groups) {
        const std::size_t n = g.size();
        const quant::VerificationReport gr = quant::verify_unique_values(Tensor::f32({n}, std::move(g)), o.bits);
        vr.unique_count = std::max(vr.unique_count, gr.unique_count);
        vr.limit = gr.limit;
        vr.pass = vr.pass && gr.pass;
      }
    } else {
      vr = quant::verify_unique_values(q, o.bits);
    }
    write_json(verify_path, json{{"tensor", o.tensor},
                                 {"bits", o.bits},
                                 {"per_channel", qp.channel_axis.has_value()},
                                 {"unique_count", vr.unique_count},
                                 {"limit", vr.limit},
                                 {"pass", vr.pass},
                                 {"run_manifest", m.to_json()}});
    if (!vr.pass) {
      ctx.err << "error: " << vr.unique_count << " distinct values exceed the " << vr.limit
              << " allowed at " << o.bits << " bits\n";
      rc = kExitUsage;
    }
  }
  b.put(o.tensor, std::move(q));
  b.meta["quantization"] = qmeta;
  b.meta["run_manifest"] = m.to_json();
  write_bundle(b, o.out);
  return rc;
}

// ---------------------------------------------------------------- zeroshot

struct ZeroshotOpts {
  std::string emb, out, report;
};

int cmd_zeroshot(const ZeroshotOpts& o, Context&) {
  RunManifest m = start_manifest("zeroshot");
  m.add_input("emb", o.emb);
  check_outputs(m, {o.out, o.report});
  const zeroshot::EmbeddingSet e = zeroshot::EmbeddingSet::from_bundle(read_bundle(o.emb));
  m.config = {{"logit_scale", e.logit_scale}};
  const zeroshot::LogitSet l = zeroshot::zero_shot_logits(e);

  TensorBundle b = l.to_bundle();
  b.meta["logit_scale"] = e.logit_scale;
  if (!e.names.empty()) b.meta["class_names"] = e.names;
  b.meta["run_manifest"] = m.to_json();
  write_bundle(b, o.out);

  if (!o.report.empty()) {
    json r{{"rows", l.rows()}, {"labeled_rows", l.labeled_rows()}, {"classes", l.classes()}};
    r["accuracy"] = l.labeled_rows() > 0 ? json(zeroshot::accuracy(l)) : json(nullptr);
    r["run_manifest"] = m.to_json();
    write_json(o.report, r);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- calibrate

struct CalibrateOpts {
  std::string logits, out, bins_csv, bin_shift;
  bool fit_temperature = false;
  double fit_split = 0.5;
  std::uint64_t seed = 7;
  std::size_t bins = metrics::kDefaultBins;
};

int cmd_calibrate(const CalibrateOpts& o, Context&) {
  if (!(o.fit_split > 0.0 && o.fit_split <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "--fit-split must lie in (0, 1]");
  }
  if (o.bins == 0) throw Error(ErrorKind::InvalidArgument, "--bins must be >= 1");
  RunManifest m = start_manifest("calibrate", o.seed);
  m.config = {{"bins", o.bins}, {"fit_temperature", o.fit_temperature}};
  if (o.fit_temperature) m.config["fit_split"] = o.fit_split;
  m.add_input("logits", o.logits);
  if (!o.bin_shift.empty()) m.add_input("bin-shift", o.bin_shift);
  check_outputs(m, {o.out, o.bins_csv});

  const zeroshot::LogitSet l = zeroshot::LogitSet::from_bundle(read_bundle(o.logits));
  const metrics::ReliabilityReport rep = metrics::ece(l, o.bins);
  json j = reliability_json(rep);
  j["accuracy"] = zeroshot::accuracy(l);

  if (o.fit_temperature) {
    std::vector<std::size_t> labeled;
    const auto y = l.labels.labels();
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (y[i] >= 0) labeled.push_back(i);
    }
    Rng rng(o.seed);
    for (std::size_t i = labeled.size(); i > 1; --i) {
      std::swap(labeled[i - 1], labeled[rng.below(i)]);
    }
    std::vector<std::size_t> fit_rows = labeled;
    std::vector<std::size_t> eval_rows = labeled;
    if (o.fit_split < 1.0) {
      auto n_fit = static_cast<std::size_t>(o.fit_split * static_cast<double>(labeled.size()));
      n_fit = std::clamp<std::size_t>(n_fit, 2, labeled.size() > 2 ? labeled.size() - 1 : 2);
      if (labeled.size() < 3) {
        throw Error(ErrorKind::InvalidArgument, "a fit/eval split needs at least 3 labeled rows");
      }
      fit_rows.assign(labeled.begin(), labeled.begin() + static_cast<std::ptrdiff_t>(n_fit));
      eval_rows.assign(labeled.begin() + static_cast<std::ptrdiff_t>(n_fit), labeled.end());
      std::sort(fit_rows.begin(), fit_rows.end());
      std::sort(eval_rows.begin(), eval_rows.end());
    }
    const zeroshot::LogitSet fit = subset(l, fit_rows);
    const zeroshot::LogitSet ev = subset(l, eval_rows);
    const metrics::TemperatureFit tf = metrics::fit_temperature(fit);
    const zeroshot::LogitSet ev_scaled = metrics::scale_logits(ev, 1.0 / tf.t_star);
    const metrics::ReliabilityReport before = metrics::ece(ev, o.bins);
    const metrics::ReliabilityReport after = metrics::ece(ev_scaled, o.bins);
    j["temperature"] = {{"t_star", tf.t_star},
                        {"fit_rows", fit_rows.size()},
                        {"eval_rows", eval_rows.size()},
                        {"fit_nll_before", tf.nll_before},
                        {"fit_nll_after", tf.nll_after},
                        {"eval_nll_before", before.nll},
                        {"eval_nll_after", after.nll},
                        {"eval_ece_before", before.ece},
                        {"eval_ece_after", after.ece}};
  }

  if (!o.bin_shift.empty()) {
    const zeroshot::LogitSet after = zeroshot::LogitSet::from_bundle(read_bundle(o.bin_shift));
    const metrics::BinShiftReport bs = metrics::bin_shift(l, after, o.bins);
    json groups = json::array();
    for (const auto& g : bs.groups) {
      groups.push_back({{"source_bin", g.source_bin},
                        {"count", g.count},
                        {"mean_conf_before", g.mean_conf_before},
                        {"mean_conf_after", g.mean_conf_after},
                        {"mean_acc_before", g.mean_acc_before},
                        {"mean_acc_after", g.mean_acc_after}});
    }
    j["bin_shift"] = {{"n_bins", bs.n_bins}, {"groups", groups}};
  }
  j["run_manifest"] = m.to_json();
  write_json(o.out, j);

  if (!o.bins_csv.empty()) {
    CsvTable t;
    t.header = {"bin", "lo", "hi", "count", "mean_confidence", "empirical_accuracy"};
    for (std::size_t i = 0; i < rep.bins.size(); ++i) {
      const auto& b = rep.bins[i];
      t.rows.push_back({std::to_string(i), format_number(b.lo), format_number(b.hi),
                        std::to_string(b.count), format_number(b.mean_confidence),
                        format_number(b.empirical_accuracy)});
    }
    write_text(o.bins_csv, t.to_string({manifest_comment(m)}));
  }
  return kExitOk;
}

// ---------------------------------------------------------------- ood

struct OodOpts {
  std::string id, ood, neg, out, scenario, method;
  std::string scorer = "msp";
  double tau = 0.01;
  double temperature = 1.0;
};

std::vector<double> ood_scores(const ood::ScorerConfig& cfg, const TensorBundle& b,
                               const zeroshot::EmbeddingSet* id_set) {
  if (b.contains("image")) {
    TensorBundle copy = b;
    if (id_set && !copy.contains("class_text")) copy.put("class_text", id_set->class_text);
    zeroshot::EmbeddingSet e = zeroshot::EmbeddingSet::from_bundle(copy);
    if (id_set) {
      // OOD samples are scored against the in-distribution label set.
      e.class_text = id_set->class_text;
      e.logit_scale = id_set->logit_scale;
    }
    return ood::score(cfg, e);
  }
  if (cfg.needs_embeddings()) {
    throw Error(ErrorKind::InvalidArgument,
                std::string(ood::scorer_name(cfg.kind)) + " needs an embedding bundle");
  }
  return ood::score(cfg, zeroshot::LogitSet::from_bundle(b));
}

int cmd_ood(const OodOpts& o, Context&) {
  ood::ScorerConfig cfg;
  cfg.kind = ood::parse_scorer(o.scorer);
  cfg.tau = o.tau;
  cfg.temperature = o.temperature;

  RunManifest m = start_manifest("ood");
  m.add_input("id", o.id);
  m.add_input("ood", o.ood);
  if (!o.neg.empty()) m.add_input("neg", o.neg);
  check_outputs(m, {o.out});

  if (!o.neg.empty()) {
    const TensorBundle nb = read_bundle(o.neg);
    const char* name = nb.contains("negative_text") ? "negative_text"
                       : nb.contains("text")        ? "text"
                                                    : "class_text";
    cfg.negative_text = cosine_normalize(nb.at(name));
  }
  cfg.validate();

  const TensorBundle id_b = read_bundle(o.id);
  const TensorBundle ood_b = read_bundle(o.ood);
  std::optional<zeroshot::EmbeddingSet> id_set;
  if (id_b.contains("image")) id_set = zeroshot::EmbeddingSet::from_bundle(id_b);
  const std::vector<double> s_id = ood_scores(cfg, id_b, nullptr);
  const std::vector<double> s_ood = ood_scores(cfg, ood_b, id_set ? &*id_set : nullptr);
  const ood::OodReport r = ood::evaluate(s_id, s_ood);

  const std::string scenario = o.scenario.empty() ? fs::path(o.ood).stem().string() : o.scenario;
  std::string method = o.method;
  if (method.empty()) method = id_b.meta_string("method").value_or("fp32");
  m.config = {{"scorer", ood::scorer_name(cfg.kind)}, {"tau", cfg.tau},
              {"temperature", cfg.temperature},      {"scenario", scenario},
              {"method", method},                    {"units", "percent"}};

  CsvTable t;
  t.header = {"scenario", "method", "scorer", "auroc", "fpr95"};
  t.rows.push_back({scenario, method, std::string(ood::scorer_name(cfg.kind)),
                    format_number(100.0 * r.auroc), format_number(100.0 * r.fpr_at_95tpr)});
  write_text(o.out, t.to_string({manifest_comment(m)}));
  return kExitOk;
}

// ---------------------------------------------------------------- qat

struct QatOpts {
  std::string config, train, eval, checkpoints, out, timeline, init;
  std::optional<std::uint64_t> seed;
};

int cmd_qat(const QatOpts& o, Context& ctx) {
  qat::QatConfig cfg = qat_config_from_json(read_toml(o.config));
  if (o.seed) cfg.seed = *o.seed;
  cfg.validate();
  const std::vector<std::size_t> marks = parse_steps(o.checkpoints);

  RunManifest m = start_manifest("qat", cfg.seed);
  m.config = qat_config_to_json(cfg);
  m.config["checkpoints"] = marks;
  m.add_input("config", o.config);
  m.add_input("train", o.train);
  const std::vector<std::string> eval_paths = split_list(o.eval);
  for (const std::string& p : eval_paths) m.add_input("eval", p);
  if (!o.init.empty()) m.add_input("init", o.init);
  check_outputs(m, {o.out, o.timeline});

  const zeroshot::EmbeddingSet train = zeroshot::EmbeddingSet::from_bundle(read_bundle(o.train));
  std::vector<qat::NamedSet> evals;
  std::set<std::string> names;
  for (const std::string& p : eval_paths) {
    std::string name = fs::path(p).stem().string();
    while (!names.insert(name).second) name += "_";
    evals.push_back({name, zeroshot::EmbeddingSet::from_bundle(read_bundle(p))});
  }
  for (std::size_t s : marks) {
    if (s > cfg.steps) {
      ctx.err << "warning: checkpoint " << s << " is past steps = " << cfg.steps << " and is skipped\n";
    }
  }

  qat::QatState state;
  if (o.init.empty()) {
    state = qat::init_state(cfg);
  } else {
    state = qat::QatState::from_bundle(read_bundle(o.init));
    qat::reset_optimizer(state);
    state.validate(cfg);
  }
  if (cfg.use_lsq) {
    const std::size_t rows = std::min(cfg.unique_samples.value_or(train.rows()), train.rows());
    const auto v = train.image.values().first(rows * train.embed_dim());
    qat::calibrate_lsq_scales(state, cfg,
                              Tensor::f32({rows, train.embed_dim()}, std::vector<float>(v.begin(), v.end())));
  }

  const qat::TrainResult res = qat::train(cfg, state, train, evals, marks);

  TensorBundle b = res.state.to_bundle();
  b.meta["config"] = qat_config_to_json(cfg);
  b.meta["diverged"] = res.diverged;
  if (res.diverged) b.meta["message"] = res.message;
  b.meta["run_manifest"] = m.to_json();
  write_bundle(b, o.out);
  if (!o.timeline.empty()) {
    write_text(o.timeline, manifest_comment(m) + "\n" + qat::timeline_csv(res.timeline));
  }
  if (res.diverged) {
    ctx.err << "error: training diverged at " << res.message
            << "; wrote the last good checkpoint\n";
    return kExitUsage;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- spectral

struct SpectralOpts {
  std::string base, quant, grid, out, bands;
  double epsilon = 1e-9;
};

int cmd_spectral(const SpectralOpts& o, Context&) {
  RunManifest m = start_manifest("spectral");
  m.add_input("base", o.base);
  m.add_input("quant", o.quant);
  check_outputs(m, {o.out, o.bands});

  std::optional<spectral::Grid> g;
  if (!o.grid.empty()) g = spectral::parse_grid(o.grid);
  const TensorBundle qb = read_bundle(o.quant);
  const spectral::FeatureMapSet base = spectral::FeatureMapSet::from_bundle(read_bundle(o.base), g);
  const spectral::FeatureMapSet quant = spectral::FeatureMapSet::from_bundle(qb, g);
  if (!(base.grid == quant.grid)) {
    throw Error(ErrorKind::GridMismatch, "base grid " + spectral::format_grid(base.grid) +
                                             " differs from quant grid " + spectral::format_grid(quant.grid));
  }
  const std::string mode = qb.meta_string("quant_mode").value_or("unspecified");
  m.config = {{"grid", spectral::format_grid(base.grid)}, {"epsilon", o.epsilon}, {"quant_mode", mode}};

  const spectral::SpectrumMap sb = spectral::spectrum(base);
  const spectral::SpectrumMap sq = spectral::spectrum(quant);
  const spectral::RseMap r = spectral::rse(sb, sq, o.epsilon);

  TensorBundle out;
  out.put("base_spectrum", sb.mag);
  out.put("quant_spectrum", sq.mag);
  out.put("rse", r.rse);
  out.meta["grid"] = spectral::format_grid(base.grid);
  out.meta["epsilon"] = o.epsilon;
  out.meta["quant_mode"] = mode;
  out.meta["run_manifest"] = m.to_json();
  write_bundle(out, o.out);

  if (!o.bands.empty()) {
    CsvTable t;
    t.header = {"map", "low", "mid", "high"};
    const auto row = [&](const char* name, const spectral::BandSummary& s) {
      t.rows.push_back({name, format_number(s.low), format_number(s.mid), format_number(s.high)});
    };
    row("base", spectral::band_energy(sb));
    row("quant", spectral::band_energy(sq));
    row("rse", spectral::band_energy(r));
    write_text(o.bands, t.to_string({manifest_comment(m)}));
  }
  return kExitOk;
}

// ---------------------------------------------------------------- report

struct ReportOpts {
  std::vector<std::string> inputs;
  std::string delta, out, json_out;
};

int cmd_report(const ReportOpts& o, Context& ctx) {
  RunManifest m = start_manifest("report");
  for (const std::string& p : o.inputs) m.add_input("row", p);
  if (!o.delta.empty()) m.add_input("delta", o.delta);
  m.config = {{"delta", !o.delta.empty()}};
  check_outputs(m, {o.out, o.json_out});

  std::vector<CsvTable> tables;
  for (const std::string& p : o.inputs) tables.push_back(read_csv(p));
  CsvTable t = concat_sorted(tables);
  if (!o.delta.empty()) t = with_relative_delta(t, read_csv(o.delta));

  const std::string csv = t.to_string({manifest_comment(m)});
  if (o.out.empty()) {
    ctx.out << csv;
  } else {
    write_text(o.out, csv);
  }
  if (!o.json_out.empty()) {
    json j = table_json(t);
    j["run_manifest"] = m.to_json();
    write_json(o.json_out, j);
  }
  return kExitOk;
}

// ---------------------------------------------------------------- synth

struct SynthOpts {
  std::string kind = "task";
  std::string split = "train";
  std::string out;
  std::size_t n = 500;
  std::size_t classes = 10;
  std::size_t dim = 32;
  double sigma = 0.5;
  double mixing = 1.0;
  std::string grid = "7x7";
  int quant_bits = 0;
  std::uint64_t seed = 0;
};

int cmd_synth(const SynthOpts& o, Context&) {
  RunManifest m = start_manifest("synth", o.seed);
  TensorBundle b;
  if (o.kind == "task") {
    GaussianTask task;
    task.classes = o.classes;
    task.dim = o.dim;
    task.sigma = o.sigma;
    task.mixing = o.mixing;
    task.seed = o.seed;
    b = task.sample(o.n, parse_split(o.split)).to_bundle();
    m.config = {{"kind", o.kind}, {"split", o.split},   {"n", o.n},          {"classes", o.classes},
                {"dim", o.dim},   {"sigma", o.sigma},   {"mixing", o.mixing}};
  } else if (o.kind == "features") {
    const spectral::Grid g = spectral::parse_grid(o.grid);
    spectral::FeatureMapSet f = synth_feature_maps(o.n, g, o.dim, o.seed);
    std::string mode = "fp32";
    if (o.quant_bits > 0) {
      quant::QuantConfig qc;
      qc.bits = o.quant_bits;
      f.tokens = quant::fake_quantize(f.tokens, quant::compute_qparams(f.tokens, qc));
      mode = "proxy-fake-quant";
    }
    b.put("tokens", f.tokens);
    b.meta["grid"] = spectral::format_grid(g);
    b.meta["quant_mode"] = mode;
    m.config = {{"kind", o.kind}, {"n", o.n}, {"grid", o.grid}, {"dim", o.dim}, {"quant_bits", o.quant_bits}};
  } else {
    throw Error(ErrorKind::InvalidArgument, "--kind must be task or features");
  }
  b.meta["run_manifest"] = m.to_json();
  write_bundle(b, o.out);
  return kExitOk;
}

}  // namespace

// ---------------------------------------------------------------- config

namespace {

[[noreturn]] void config_error(const std::string& msg) { throw Error(ErrorKind::ConfigParse, msg); }

template <typename T>
T get_as(const json& v, const std::string& key) {
  if constexpr (std::is_same_v<T, bool>) {
    if (!v.is_boolean()) config_error("'" + key + "' must be a boolean");
  } else if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) config_error("'" + key + "' must be an integer");
    if (std::is_unsigned_v<T> && v.get<std::int64_t>() < 0) config_error("'" + key + "' must be >= 0");
  } else if constexpr (std::is_floating_point_v<T>) {
    if (!v.is_number()) config_error("'" + key + "' must be a number");
  } else {
    if (!v.is_string()) config_error("'" + key + "' must be a string");
  }
  return v.get<T>();
}

}  // namespace

qat::QatConfig qat_config_from_json(const json& j) {
  if (!j.is_object()) config_error("config must be a table");
  qat::QatConfig c;
  for (const auto& [key, v] : j.items()) {
    if (key == "layer_dims") {
      if (!v.is_array() || v.empty()) config_error("'layer_dims' must be a non-empty array");
      c.layer_dims.clear();
      for (const auto& d : v) c.layer_dims.push_back(get_as<std::size_t>(d, "layer_dims"));
    } else if (key == "bits_w") {
      c.bits_w = get_as<int>(v, key);
    } else if (key == "bits_a") {
      c.bits_a = get_as<int>(v, key);
    } else if (key == "use_lsq") {
      c.use_lsq = get_as<bool>(v, key);
    } else if (key == "lora_rank") {
      c.lora_rank = get_as<std::size_t>(v, key);
    } else if (key == "lora_alpha") {
      c.lora_alpha = get_as<double>(v, key);
    } else if (key == "lr_base") {
      c.lr_base = get_as<double>(v, key);
    } else if (key == "lr_lsq_scale") {
      c.lr_lsq_scale = get_as<double>(v, key);
    } else if (key == "steps") {
      c.steps = get_as<std::size_t>(v, key);
    } else if (key == "batch") {
      c.batch = get_as<std::size_t>(v, key);
    } else if (key == "unique_samples") {
      if (v.is_string()) {
        if (v.get<std::string>() != "all") config_error("'unique_samples' must be an integer or \"all\"");
        c.unique_samples.reset();
      } else {
        c.unique_samples = get_as<std::size_t>(v, key);
      }
    } else if (key == "hidden_activation") {
      const auto a = get_as<std::string>(v, key);
      if (a == "relu") {
        c.hidden_activation = qat::Activation::Relu;
      } else if (a == "identity") {
        c.hidden_activation = qat::Activation::Identity;
      } else {
        config_error("'hidden_activation' must be relu or identity");
      }
    } else if (key == "seed") {
      c.seed = get_as<std::uint64_t>(v, key);
    } else if (key == "optimizer") {
      if (!v.is_object()) config_error("'optimizer' must be a table");
      for (const auto& [k, x] : v.items()) {
        if (k == "beta1") {
          c.optimizer.beta1 = get_as<double>(x, k);
        } else if (k == "beta2") {
          c.optimizer.beta2 = get_as<double>(x, k);
        } else if (k == "eps") {
          c.optimizer.eps = get_as<double>(x, k);
        } else if (k == "weight_decay") {
          c.optimizer.weight_decay = get_as<double>(x, k);
        } else if (k != "name" || x != "adamw") {
          config_error("unknown optimizer key '" + k + "'");
        }
      }
    } else if (key == "distill") {
      if (!v.is_object()) config_error("'distill' must be a table");
      for (const auto& [k, x] : v.items()) {
        if (k == "kind") {
          const auto s = get_as<std::string>(x, k);
          if (s == "none") {
            c.distill.kind = qat::DistillKind::None;
          } else if (s == "mse" || s == "mse_normalized_features") {
            c.distill.kind = qat::DistillKind::MseNormalizedFeatures;
          } else if (s == "kl" || s == "kl_divergence") {
            c.distill.kind = qat::DistillKind::KlDivergence;
          } else {
            config_error("distill.kind must be none, mse or kl");
          }
        } else if (k == "alpha") {
          c.distill.alpha = get_as<double>(x, k);
        } else if (k == "tau") {
          c.distill.tau = get_as<double>(x, k);
        } else {
          config_error("unknown distill key '" + k + "'");
        }
      }
    } else {
      config_error("unknown config key '" + key + "'");
    }
  }
  if (c.layer_dims.empty()) config_error("'layer_dims' is required");
  try {
    c.validate();
  } catch (const Error& e) {
    config_error(e.what());
  }
  return c;
}

json qat_config_to_json(const qat::QatConfig& c) {
  json j;
  j["layer_dims"] = c.layer_dims;
  j["bits_w"] = c.bits_w;
  j["bits_a"] = c.bits_a;
  j["use_lsq"] = c.use_lsq;
  j["lora_rank"] = c.lora_rank;
  j["lora_alpha"] = c.lora_alpha;
  j["lr_base"] = c.lr_base;
  j["lr_lsq_scale"] = c.lr_lsq_scale;
  j["steps"] = c.steps;
  j["batch"] = c.batch;
  j["unique_samples"] = c.unique_samples ? json(*c.unique_samples) : json("all");
  j["hidden_activation"] = c.hidden_activation == qat::Activation::Relu ? "relu" : "identity";
  j["seed"] = c.seed;
  j["optimizer"] = {{"beta1", c.optimizer.beta1},
                    {"beta2", c.optimizer.beta2},
                    {"eps", c.optimizer.eps},
                    {"weight_decay", c.optimizer.weight_decay}};
  const char* kind = c.distill.kind == qat::DistillKind::None                    ? "none"
                     : c.distill.kind == qat::DistillKind::MseNormalizedFeatures ? "mse"
                                                                                 : "kl";
  j["distill"] = {{"kind", kind}, {"alpha", c.distill.alpha}, {"tau", c.distill.tau}};
  return j;
}

// ---------------------------------------------------------------- run

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"qreli: quantization reliability lab", "qreli"};
  app.set_version_flag("--version", std::string(version()));
  app.require_subcommand(1);
  app.fallthrough(false);
  app.failure_message(CLI::FailureMessage::help);

  std::function<int(Context&)> action;

  QuantizeOpts qo;
  auto* sq = app.add_subcommand("quantize", "Fake-quantize one tensor of a bundle");
  sq->add_option("--in", qo.in, "Input bundle")->required();
  sq->add_option("--tensor", qo.tensor, "Tensor entry to quantize")->required();
  sq->add_option("--bits", qo.bits, "Bit-width (2-16)")->capture_default_str();
  auto* sym = sq->add_flag("--symmetric", "Signed symmetric grid (default)");
  sq->add_flag("--asymmetric", qo.asymmetric, "Unsigned grid with zero point")->excludes(sym);
  sq->add_option("--granularity", qo.granularity)
      ->check(CLI::IsMember({"per-tensor", "per-channel"}))
      ->capture_default_str();
  sq->add_option("--axis", qo.axis, "Channel axis for per-channel")->capture_default_str();
  sq->add_option("--calibration", qo.calibration)
      ->check(CLI::IsMember({"minmax", "percentile"}))
      ->capture_default_str();
  sq->add_option("--percentile", qo.percentile, "Range percentile in (0, 1]")->capture_default_str();
  sq->add_option("--out", qo.out, "Output bundle")->required();
  sq->add_flag("--verify", qo.verify, "Write <out>.verify.json with the unique-value check");
  sq->callback([&] { action = [&](Context& c) { return cmd_quantize(qo, c); }; });

  ZeroshotOpts zo;
  auto* sz = app.add_subcommand("zeroshot", "Zero-shot logits from an embedding bundle");
  sz->add_option("--emb", zo.emb, "Embedding bundle")->required();
  sz->add_option("--out", zo.out, "Output logit bundle")->required();
  sz->add_option("--report", zo.report, "Accuracy JSON");
  sz->callback([&] { action = [&](Context& c) { return cmd_zeroshot(zo, c); }; });

  CalibrateOpts co;
  auto* sc = app.add_subcommand("calibrate", "ECE, NLL, temperature fit and bin shift");
  sc->add_option("--logits", co.logits, "Logit bundle")->required();
  sc->add_flag("--fit-temperature", co.fit_temperature, "Fit a single temperature");
  sc->add_option("--fit-split", co.fit_split, "Fraction of labeled rows used to fit")
      ->capture_default_str();
  sc->add_option("--seed", co.seed, "Seed of the fit/eval split")->capture_default_str();
  sc->add_option("--bins", co.bins, "Number of confidence bins")->capture_default_str();
  sc->add_option("--bin-shift", co.bin_shift, "Logit bundle of the model to compare");
  sc->add_option("--out", co.out, "Report JSON")->required();
  sc->add_option("--bins-csv", co.bins_csv, "Reliability-diagram CSV");
  sc->callback([&] { action = [&](Context& c) { return cmd_calibrate(co, c); }; });

  OodOpts oo;
  auto* so = app.add_subcommand("ood", "Zero-shot OOD detection metrics");
  so->add_option("--id", oo.id, "In-distribution bundle")->required();
  so->add_option("--ood", oo.ood, "Out-of-distribution bundle")->required();
  so->add_option("--scorer", oo.scorer, "msp, energy, mcm, generic-negative, neglabel")
      ->capture_default_str();
  so->add_option("--tau", oo.tau, "Similarity temperature")->capture_default_str();
  so->add_option("--temperature", oo.temperature, "Energy temperature")->capture_default_str();
  so->add_option("--neg", oo.neg, "Negative text embeddings bundle");
  so->add_option("--scenario", oo.scenario, "Scenario label (default: OOD file stem)");
  so->add_option("--method", oo.method, "Method label (default: meta method or fp32)");
  so->add_option("--out", oo.out, "Output CSV row")->required();
  so->callback([&] { action = [&](Context& c) { return cmd_ood(oo, c); }; });

  QatOpts ko;
  auto* sk = app.add_subcommand("qat", "Quantization-aware training of a head");
  sk->add_option("--config", ko.config, "TOML config")->required();
  sk->add_option("--train", ko.train, "Training embedding bundle")->required();
  sk->add_option("--eval", ko.eval, "Comma-separated evaluation bundles");
  sk->add_option("--checkpoints", ko.checkpoints, "Comma-separated evaluation steps");
  sk->add_option("--init", ko.init, "Initial state bundle");
  sk->add_option("--seed", ko.seed, "Overrides the config seed");
  sk->add_option("--out", ko.out, "Output state bundle")->required();
  sk->add_option("--timeline", ko.timeline, "Timeline CSV");
  sk->callback([&] { action = [&](Context& c) { return cmd_qat(ko, c); }; });

  SpectralOpts po;
  auto* sp = app.add_subcommand("spectral", "Fourier spectra and relative spectral error");
  sp->add_option("--base", po.base, "Full-precision feature maps")->required();
  sp->add_option("--quant", po.quant, "Quantized feature maps")->required();
  sp->add_option("--grid", po.grid, "Token grid, e.g. 7x7 (default: bundle meta)");
  sp->add_option("--epsilon", po.epsilon, "RSE denominator guard")->capture_default_str();
  sp->add_option("--out", po.out, "Output spectrum bundle")->required();
  sp->add_option("--bands", po.bands, "Band summary CSV");
  sp->callback([&] { action = [&](Context& c) { return cmd_spectral(po, c); }; });

  ReportOpts ro;
  auto* sr = app.add_subcommand("report", "Merge CSV rows into one sorted table");
  sr->add_option("inputs", ro.inputs, "CSV files")->required();
  sr->add_option("--delta", ro.delta, "Baseline CSV for relative-change columns");
  sr->add_option("--out", ro.out, "Output CSV (default: stdout)");
  sr->add_option("--json", ro.json_out, "Output JSON");
  sr->callback([&] { action = [&](Context& c) { return cmd_report(ro, c); }; });

  SynthOpts yo;
  auto* sy = app.add_subcommand("synth", "Write seeded synthetic fixtures");
  sy->add_option("--kind", yo.kind, "task or features")->capture_default_str();
  sy->add_option("--split", yo.split, "train, test, shift or ood")->capture_default_str();
  sy->add_option("--n", yo.n, "Rows or samples")->capture_default_str();
  sy->add_option("--classes", yo.classes)->capture_default_str();
  sy->add_option("--dim", yo.dim, "Embedding or channel width")->capture_default_str();
  sy->add_option("--sigma", yo.sigma, "Within-class noise")->capture_default_str();
  sy->add_option("--mixing", yo.mixing, "Strength of the random mixing matrix")->capture_default_str();
  sy->add_option("--grid", yo.grid)->capture_default_str();
  sy->add_option("--quant-bits", yo.quant_bits, "Fake-quantize feature maps (0 = off)")
      ->capture_default_str();
  sy->add_option("--seed", yo.seed)->capture_default_str();
  sy->add_option("--out", yo.out, "Output bundle")->required();
  sy->callback([&] { action = [&](Context& c) { return cmd_synth(yo, c); }; });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  Context ctx{out, err};
  try {
    return action(ctx);
  } catch (const Error& e) {
    err << "error: " << to_string(e.kind()) << ": " << e.what() << "\n";
    return is_io_error(e.kind()) ? kExitIo : kExitUsage;
  } catch (const fs::filesystem_error& e) {
    err << "error: io: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace qreli::cli
