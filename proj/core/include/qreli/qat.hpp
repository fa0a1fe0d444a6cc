// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qreli/bundle.hpp"
#include "qreli/rng.hpp"
#include "qreli/tensor.hpp"
#include "qreli/zeroshot.hpp"

// Desk-scale quantization-aware training of a linear/MLP head over frozen
// embeddings. Each layer computes
//
//   y = fq_a(act(x)) . fq_w(W)^T + bias + (alpha / r) . (act(x) . A^T) . B^T
//
// The base path is fake-quantized; the LoRA path sees the full-precision
// input. Gradients through rounding use the straight-through estimator, and
// with LSQ enabled the weight/activation step sizes are trainable with their
// gradients scaled by 1 / sqrt(N * Q_max).
namespace qreli::qat {

using zeroshot::EmbeddingSet;

/// Bit-width value that disables quantization of a path.
inline constexpr int kFullPrecisionBits = 32;
/// Lower bound for LSQ step sizes after every optimizer update.
inline constexpr float kMinScale = 1e-8f;

enum class Activation { Identity, Relu };

enum class DistillKind { None, MseNormalizedFeatures, KlDivergence };

struct DistillConfig {
  DistillKind kind = DistillKind::None;
  double alpha = 0.5;  // weight of the distillation term
  double tau = 1.0;    // KL temperature
};

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

struct QatConfig {
  std::vector<std::size_t> layer_dims;  // [in, hidden..., out]
  int bits_w = 8;
  int bits_a = 8;
  bool use_lsq = false;
  std::size_t lora_rank = 8;
  double lora_alpha = 16.0;
  double lr_base = 5e-5;
  double lr_lsq_scale = 1e-7;
  AdamWConfig optimizer;
  std::size_t steps = 100;
  std::size_t batch = 100;
  std::optional<std::size_t> unique_samples;  // nullopt = every training row
  DistillConfig distill;
  Activation hidden_activation = Activation::Relu;
  std::uint64_t seed = 0;

  bool quantize_weights() const noexcept { return bits_w < kFullPrecisionBits; }
  bool quantize_activations() const noexcept { return bits_a < kFullPrecisionBits; }
  std::size_t layers() const noexcept { return layer_dims.empty() ? 0 : layer_dims.size() - 1; }
  double lora_scale() const noexcept { return lora_alpha / static_cast<double>(lora_rank); }

  void validate() const;
};

struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<float> W;     // out x in
  std::vector<float> bias;  // out
  std::vector<float> A;     // r x in
  std::vector<float> B;     // out x r
  float s_w = 1.0f;         // LSQ weight step size
  float s_a = 1.0f;         // LSQ activation step size
};

struct Moments {
  std::vector<float> m;
  std::vector<float> v;
};

struct LayerMoments {
  Moments W, bias, A, B, s_w, s_a;
};

struct QatState {
  std::vector<Layer> layers;
  std::vector<LayerMoments> moments;
  std::size_t step = 0;

  void validate(const QatConfig& cfg) const;
  bool all_finite() const noexcept;

  TensorBundle to_bundle() const;
  static QatState from_bundle(const TensorBundle& bundle);
};

/// Fresh head: W is the identity for square layers and N(0, 1/in) otherwise,
/// bias 0, A ~ N(0, 0.02^2), B = 0. LSQ scales start at max|W| / Q_max for
/// weights and 1 for activations (see calibrate_lsq_scales).
QatState init_state(const QatConfig& cfg);

/// Folds the adapter into the base weights: W += (alpha / r) B A, then B = 0.
/// The full-precision function of the head is unchanged.
void merge_lora(QatState& state, const QatConfig& cfg);

/// Zeroes optimizer moments and the step counter, keeping parameters.
void reset_optimizer(QatState& state);

/// Sets s_w = max|W| / Q_max and s_a = max|act(x)| / Q_max per layer from a
/// full-precision pass over `calibration`.
void calibrate_lsq_scales(QatState& state, const QatConfig& cfg, const Tensor& calibration);

/// Quantizer applied on one path during a forward pass. Dynamic quantizers
/// (use_lsq = false) recompute MinMax parameters and treat them as constants
/// in backward; LSQ quantizers use the learned step size.
struct QuantSite {
  bool enabled = false;
  bool lsq = false;
  float scale = 1.0f;
  float zero_point = 0.0f;
  float qmin = 0.0f;
  float qmax = 0.0f;
};

struct LayerTape {
  std::vector<float> h;    // layer input, batch x in
  std::vector<float> a;    // act(h)
  std::vector<float> a_q;  // base-path activations after fake quantization
  std::vector<float> w_q;  // base-path weights after fake quantization
  std::vector<double> u;   // a . A^T, batch x r
  QuantSite act_site;
  QuantSite weight_site;
};

struct Tape {
  std::size_t batch = 0;
  std::vector<std::size_t> layer_dims;
  std::vector<LayerTape> layers;
};

struct ForwardResult {
  Tensor y;
  Tape tape;
};

/// Throws NumericalDivergence on a non-finite intermediate.
ForwardResult forward(const QatState& state, const QatConfig& cfg, const Tensor& x);

struct LayerGrads {
  std::vector<double> W, bias, A, B;
  double s_w = 0.0;
  double s_a = 0.0;
};

struct Gradients {
  std::vector<LayerGrads> layers;
  std::vector<double> input;  // dL/dx, batch x in

  bool all_finite() const noexcept;
};

/// Reverse pass for the tape of a matching forward. Throws MismatchedTape.
Gradients backward(const QatState& state, const QatConfig& cfg, const Tape& tape,
                   const Tensor& grad_y);

/// Decoupled-weight-decay Adam. W, bias, A and B use lr_base (decay applies to
/// W, A and B); s_w and s_a use lr_lsq_scale without decay and are clamped to
/// kMinScale afterwards.
void adamw_step(QatState& state, const Gradients& grads, const QatConfig& cfg);

struct LossResult {
  double total = 0.0;
  double task = 0.0;
  double distill = 0.0;
  Tensor grad_y;
};

/// Loss on head features `y` for one batch:
///   (1 - alpha_d) * CE(logit_scale * norm(y) . text^T, labels) + alpha_d * distill
/// without distillation the loss is plain CE. `class_text` rows must be unit
/// norm. `teacher_y` is required when distillation is configured. Rows with
/// label -1 are ignored by CE.
LossResult head_loss(const QatConfig& cfg, const Tensor& y, std::span<const std::int64_t> labels,
                     const Tensor& class_text, double logit_scale, const Tensor* teacher_y);

/// Full-precision configuration with the same topology (no quantization).
QatConfig full_precision(const QatConfig& cfg);

/// Runs the head over `x` in chunks of cfg.batch rows (dynamic activation
/// ranges are therefore per chunk, as during training).
Tensor apply_head(const QatState& state, const QatConfig& cfg, const Tensor& x);

/// Zero-shot logits of head-transformed image embeddings against the set's
/// class text anchors.
zeroshot::LogitSet head_logits(const QatState& state, const QatConfig& cfg, const EmbeddingSet& e);

struct TimelineRow {
  std::size_t step = 0;
  std::string set;
  double accuracy = 0.0;
  double ece = 0.0;
};

struct NamedSet {
  std::string name;
  EmbeddingSet set;
};

struct TrainResult {
  QatState state;
  std::vector<TimelineRow> timeline;
  bool diverged = false;
  std::string message;
};

/// Trains from `initial`. Batches cycle through the first unique_samples rows
/// of `train_set` in order; the frozen full-precision copy of `initial` is the
/// distillation teacher. Each eval set is scored at every checkpoint step
/// (step 0 = before any update). On divergence the result carries the state
/// from the last evaluated checkpoint.
TrainResult train(const QatConfig& cfg, const QatState& initial, const EmbeddingSet& train_set,
                  const std::vector<NamedSet>& eval_sets, const std::vector<std::size_t>& checkpoints);

std::string timeline_csv(const std::vector<TimelineRow>& rows);

}  // namespace qreli::qat
