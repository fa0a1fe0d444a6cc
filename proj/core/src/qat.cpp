// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#include "qreli/qat.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "qreli/metrics.hpp"
#include "qreli/quantize.hpp"

namespace qreli::qat {

namespace {

bool valid_bits(int bits) { return bits == kFullPrecisionBits || (bits >= 2 && bits <= 16); }

bool finite(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

bool finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

float symmetric_qmax(int bits) { return static_cast<float>(quant::integer_range(bits, true).second); }

}  // namespace

void QatConfig::validate() const {
  auto fail = [](const std::string& msg) { throw Error(ErrorKind::InvalidArgument, msg); };
  if (layer_dims.size() < 2) fail("layer_dims needs at least an input and an output width");
  if (std::any_of(layer_dims.begin(), layer_dims.end(), [](std::size_t d) { return d == 0; })) {
    fail("layer widths must be positive");
  }
  if (!valid_bits(bits_w) || !valid_bits(bits_a)) fail("bits must lie in 2..16, or 32 to disable");
  if (lora_rank < 1) fail("lora_rank must be >= 1");
  if (steps < 1) fail("steps must be >= 1");
  if (batch < 1) fail("batch must be >= 1");
  if (unique_samples && *unique_samples == 0) fail("unique_samples must be >= 1");
  if (!(lr_base >= 0.0) || !(lr_lsq_scale >= 0.0)) fail("learning rates must be non-negative");
  if (!(optimizer.beta1 >= 0.0 && optimizer.beta1 < 1.0) ||
      !(optimizer.beta2 >= 0.0 && optimizer.beta2 < 1.0) || !(optimizer.eps > 0.0) ||
      !(optimizer.weight_decay >= 0.0)) {
    fail("invalid AdamW hyperparameters");
  }
  if (!(distill.alpha >= 0.0 && distill.alpha <= 1.0)) fail("distillation alpha must lie in [0, 1]");
  if (!(distill.tau > 0.0)) fail("distillation tau must be positive");
}

void QatState::validate(const QatConfig& cfg) const {
  if (layers.size() != cfg.layers() || moments.size() != layers.size()) {
    throw Error(ErrorKind::DimensionMismatch, "state depth does not match layer_dims");
  }
  const std::size_t r = cfg.lora_rank;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& L = layers[l];
    if (L.in != cfg.layer_dims[l] || L.out != cfg.layer_dims[l + 1] ||
        L.W.size() != L.out * L.in || L.bias.size() != L.out || L.A.size() != r * L.in ||
        L.B.size() != L.out * r) {
      throw Error(ErrorKind::DimensionMismatch,
                  "layer " + std::to_string(l) + " shapes disagree with the config");
    }
    if (!(L.s_w > 0.0f) || !(L.s_a > 0.0f)) {
      throw Error(ErrorKind::InvalidArgument, "LSQ scales must be positive");
    }
  }
}

bool QatState::all_finite() const noexcept {
  for (const Layer& L : layers) {
    if (!finite(L.W) || !finite(L.bias) || !finite(L.A) || !finite(L.B) || !std::isfinite(L.s_w) ||
        !std::isfinite(L.s_a)) {
      return false;
    }
  }
  return true;
}

namespace {

Moments zero_moments(std::size_t n) { return Moments{std::vector<float>(n, 0.0f), std::vector<float>(n, 0.0f)}; }

LayerMoments zero_moments_for(const Layer& L) {
  return LayerMoments{zero_moments(L.W.size()), zero_moments(L.bias.size()),
                      zero_moments(L.A.size()), zero_moments(L.B.size()),
                      zero_moments(1),          zero_moments(1)};
}

float max_abs(std::span<const float> v) {
  float m = 0.0f;
  for (float x : v) m = std::max(m, std::fabs(x));
  return m;
}

}  // namespace

QatState init_state(const QatConfig& cfg) {
  cfg.validate();
  Rng rng(cfg.seed);
  QatState s;
  const std::size_t r = cfg.lora_rank;
  for (std::size_t l = 0; l < cfg.layers(); ++l) {
    Layer L;
    L.in = cfg.layer_dims[l];
    L.out = cfg.layer_dims[l + 1];
    L.W.assign(L.out * L.in, 0.0f);
    if (L.in == L.out) {
      for (std::size_t i = 0; i < L.in; ++i) L.W[i * L.in + i] = 1.0f;
    } else {
      const double sd = 1.0 / std::sqrt(static_cast<double>(L.in));
      for (float& w : L.W) w = static_cast<float>(rng.normal(0.0, sd));
    }
    L.bias.assign(L.out, 0.0f);
    L.A.resize(r * L.in);
    for (float& a : L.A) a = static_cast<float>(rng.normal(0.0, 0.02));
    L.B.assign(L.out * r, 0.0f);
    if (cfg.quantize_weights()) {
      const float m = max_abs(L.W);
      L.s_w = m > 0.0f ? m / symmetric_qmax(cfg.bits_w) : 1.0f;
    }
    s.moments.push_back(zero_moments_for(L));
    s.layers.push_back(std::move(L));
  }
  return s;
}

void merge_lora(QatState& state, const QatConfig& cfg) {
  state.validate(cfg);
  const std::size_t r = cfg.lora_rank;
  const double scale = cfg.lora_scale();
  for (Layer& L : state.layers) {
    for (std::size_t o = 0; o < L.out; ++o) {
      for (std::size_t i = 0; i < L.in; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < r; ++k) acc += static_cast<double>(L.B[o * r + k]) * L.A[k * L.in + i];
        L.W[o * L.in + i] = static_cast<float>(L.W[o * L.in + i] + scale * acc);
      }
    }
    std::fill(L.B.begin(), L.B.end(), 0.0f);
  }
}

void reset_optimizer(QatState& state) {
  state.moments.clear();
  for (const Layer& L : state.layers) state.moments.push_back(zero_moments_for(L));
  state.step = 0;
}

QatConfig full_precision(const QatConfig& cfg) {
  QatConfig fp = cfg;
  fp.bits_w = kFullPrecisionBits;
  fp.bits_a = kFullPrecisionBits;
  fp.use_lsq = false;
  return fp;
}

namespace {

std::vector<float> activate(const std::vector<float>& h, Activation act) {
  if (act == Activation::Identity) return h;
  std::vector<float> a(h.size());
  for (std::size_t i = 0; i < h.size(); ++i) a[i] = h[i] > 0.0f ? h[i] : 0.0f;
  return a;
}

Activation layer_activation(const QatConfig& cfg, std::size_t l) {
  return l == 0 ? Activation::Identity : cfg.hidden_activation;
}

// Quantizer for one path. LSQ sites are symmetric with a learned step; dynamic
// sites calibrate MinMax on the current values (asymmetric for activations).
QuantSite make_site(const std::vector<float>& values, std::size_t rows, std::size_t cols, int bits,
                    bool lsq, float lsq_scale, bool symmetric_dynamic) {
  QuantSite site;
  if (bits >= kFullPrecisionBits) return site;
  site.enabled = true;
  site.lsq = lsq;
  if (lsq) {
    const float q = symmetric_qmax(bits);
    site.scale = lsq_scale;
    site.zero_point = 0.0f;
    site.qmin = -q;
    site.qmax = q;
    return site;
  }
  quant::QuantConfig qc;
  qc.bits = bits;
  qc.symmetric = symmetric_dynamic;
  const quant::QuantParams qp = quant::compute_qparams(Tensor::f32({rows, cols}, values), qc);
  site.scale = qp.scale[0];
  site.zero_point = static_cast<float>(qp.zero_point[0]);
  site.qmin = static_cast<float>(qp.qmin);
  site.qmax = static_cast<float>(qp.qmax);
  return site;
}

std::vector<float> apply_site(const std::vector<float>& v, const QuantSite& site) {
  if (!site.enabled) return v;
  std::vector<float> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    out[i] = quant::fake_quantize_value(v[i], site.scale, site.zero_point, site.qmin, site.qmax);
  }
  return out;
}

void check_finite(std::span<const float> v, const char* what, std::size_t layer) {
  if (!finite(v)) {
    throw Error(ErrorKind::NumericalDivergence,
                std::string(what) + " of layer " + std::to_string(layer) + " is not finite");
  }
}

}  // namespace

ForwardResult forward(const QatState& state, const QatConfig& cfg, const Tensor& x) {
  cfg.validate();
  state.validate(cfg);
  require_matrix(x, "head input");
  if (x.dim(1) != cfg.layer_dims.front()) {
    throw Error(ErrorKind::DimensionMismatch, "head input width " + std::to_string(x.dim(1)) +
                                                  " != layer_dims[0]");
  }
  check_finite(x.values(), "input", 0);
  const std::size_t nb = x.dim(0);
  const std::size_t r = cfg.lora_rank;
  const double lora = cfg.lora_scale();

  ForwardResult res;
  res.tape.batch = nb;
  res.tape.layer_dims = cfg.layer_dims;
  std::vector<float> h(x.values().begin(), x.values().end());
  for (std::size_t l = 0; l < state.layers.size(); ++l) {
    const Layer& L = state.layers[l];
    LayerTape lt;
    lt.h = h;
    lt.a = activate(h, layer_activation(cfg, l));
    lt.act_site = make_site(lt.a, nb, L.in, cfg.bits_a, cfg.use_lsq, L.s_a, false);
    lt.a_q = apply_site(lt.a, lt.act_site);
    lt.weight_site = make_site(L.W, L.out, L.in, cfg.bits_w, cfg.use_lsq, L.s_w, true);
    lt.w_q = apply_site(L.W, lt.weight_site);

    lt.u.assign(nb * r, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t k = 0; k < r; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < L.in; ++i) {
          acc += static_cast<double>(lt.a[b * L.in + i]) * L.A[k * L.in + i];
        }
        lt.u[b * r + k] = acc;
      }
    }
    std::vector<float> y(nb * L.out);
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t o = 0; o < L.out; ++o) {
        double acc = L.bias[o];
        for (std::size_t i = 0; i < L.in; ++i) {
          acc += static_cast<double>(lt.a_q[b * L.in + i]) * lt.w_q[o * L.in + i];
        }
        double side = 0.0;
        for (std::size_t k = 0; k < r; ++k) side += lt.u[b * r + k] * L.B[o * r + k];
        y[b * L.out + o] = static_cast<float>(acc + lora * side);
      }
    }
    check_finite(y, "output", l);
    res.tape.layers.push_back(std::move(lt));
    h = std::move(y);
  }
  res.y = Tensor::f32({nb, cfg.layer_dims.back()}, std::move(h));
  return res;
}

namespace {

// STE / LSQ backward through one quantization site. Returns the gradient with
// respect to the unquantized input and accumulates d(out)/d(scale) into
// `scale_grad` (LSQ sites only; the caller applies the gradient scale).
std::vector<double> site_backward(const std::vector<float>& x, const std::vector<double>& grad_q,
                                  const QuantSite& site, double& scale_grad) {
  if (!site.enabled) return grad_q;
  std::vector<double> gx(x.size(), 0.0);
  double sg = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const float v = x[i] / site.scale + site.zero_point;
    if (site.lsq) {
      if (v <= site.qmin) {
        sg += grad_q[i] * site.qmin;
      } else if (v >= site.qmax) {
        sg += grad_q[i] * site.qmax;
      } else {
        gx[i] = grad_q[i];
        sg += grad_q[i] * (static_cast<double>(std::round(v)) - static_cast<double>(v));
      }
    } else if (v >= site.qmin && v <= site.qmax) {
      gx[i] = grad_q[i];
    }
  }
  scale_grad = sg;
  return gx;
}

}  // namespace

Gradients backward(const QatState& state, const QatConfig& cfg, const Tape& tape,
                   const Tensor& grad_y) {
  state.validate(cfg);
  if (tape.layer_dims != cfg.layer_dims || tape.layers.size() != state.layers.size()) {
    throw Error(ErrorKind::MismatchedTape, "tape was recorded for a different head");
  }
  require_matrix(grad_y, "grad_y");
  const std::size_t nb = tape.batch;
  if (grad_y.dim(0) != nb || grad_y.dim(1) != cfg.layer_dims.back()) {
    throw Error(ErrorKind::MismatchedTape, "grad_y shape does not match the tape");
  }
  const std::size_t r = cfg.lora_rank;
  const double lora = cfg.lora_scale();

  Gradients grads;
  grads.layers.resize(state.layers.size());
  std::vector<double> g(grad_y.values().begin(), grad_y.values().end());
  for (std::size_t l = state.layers.size(); l-- > 0;) {
    const Layer& L = state.layers[l];
    const LayerTape& lt = tape.layers[l];
    if (lt.h.size() != nb * L.in || lt.w_q.size() != L.W.size()) {
      throw Error(ErrorKind::MismatchedTape, "tape layer " + std::to_string(l) + " has wrong size");
    }
    LayerGrads& lg = grads.layers[l];

    lg.bias.assign(L.out, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t o = 0; o < L.out; ++o) lg.bias[o] += g[b * L.out + o];
    }

    std::vector<double> grad_wq(L.out * L.in, 0.0);
    std::vector<double> grad_aq(nb * L.in, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t o = 0; o < L.out; ++o) {
        const double go = g[b * L.out + o];
        if (go == 0.0) continue;
        for (std::size_t i = 0; i < L.in; ++i) {
          grad_wq[o * L.in + i] += go * lt.a_q[b * L.in + i];
          grad_aq[b * L.in + i] += go * lt.w_q[o * L.in + i];
        }
      }
    }

    double sw = 0.0;
    lg.W = site_backward(L.W, grad_wq, lt.weight_site, sw);
    if (lt.weight_site.enabled && lt.weight_site.lsq) {
      const double n = static_cast<double>(L.W.size());
      lg.s_w = sw / std::sqrt(n * lt.weight_site.qmax);
    }
    double sa = 0.0;
    std::vector<double> grad_a = site_backward(lt.a, grad_aq, lt.act_site, sa);
    if (lt.act_site.enabled && lt.act_site.lsq) {
      const double n = static_cast<double>(lt.a.size());
      lg.s_a = sa / std::sqrt(n * lt.act_site.qmax);
    }

    // LoRA side path on the full-precision activations.
    lg.B.assign(L.out * r, 0.0);
    std::vector<double> grad_u(nb * r, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t o = 0; o < L.out; ++o) {
        const double go = lora * g[b * L.out + o];
        for (std::size_t k = 0; k < r; ++k) {
          lg.B[o * r + k] += go * lt.u[b * r + k];
          grad_u[b * r + k] += go * L.B[o * r + k];
        }
      }
    }
    lg.A.assign(r * L.in, 0.0);
    for (std::size_t b = 0; b < nb; ++b) {
      for (std::size_t k = 0; k < r; ++k) {
        const double gu = grad_u[b * r + k];
        if (gu == 0.0) continue;
        for (std::size_t i = 0; i < L.in; ++i) {
          lg.A[k * L.in + i] += gu * lt.a[b * L.in + i];
          grad_a[b * L.in + i] += gu * L.A[k * L.in + i];
        }
      }
    }

    if (layer_activation(cfg, l) == Activation::Relu) {
      for (std::size_t i = 0; i < grad_a.size(); ++i) {
        if (!(lt.h[i] > 0.0f)) grad_a[i] = 0.0;
      }
    }
    g = std::move(grad_a);
  }
  grads.input = std::move(g);
  return grads;
}

bool Gradients::all_finite() const noexcept {
  for (const LayerGrads& lg : layers) {
    if (!finite(lg.W) || !finite(lg.bias) || !finite(lg.A) || !finite(lg.B) ||
        !std::isfinite(lg.s_w) || !std::isfinite(lg.s_a)) {
      return false;
    }
  }
  return finite(input);
}

namespace {

struct AdamStep {
  double lr;
  double weight_decay;
  double beta1;
  double beta2;
  double eps;
  double bias1;  // 1 - beta1^t
  double bias2;  // 1 - beta2^t
};

void adam_update(float& p, double g, float& m, float& v, const AdamStep& s) {
  const double m1 = s.beta1 * m + (1.0 - s.beta1) * g;
  const double v1 = s.beta2 * v + (1.0 - s.beta2) * g * g;
  m = static_cast<float>(m1);
  v = static_cast<float>(v1);
  double x = p;
  x -= s.lr * s.weight_decay * x;
  x -= s.lr * (m1 / s.bias1) / (std::sqrt(v1 / s.bias2) + s.eps);
  p = static_cast<float>(x);
}

void adam_update(std::vector<float>& p, const std::vector<double>& g, Moments& mom,
                 const AdamStep& s) {
  if (g.size() != p.size() || mom.m.size() != p.size() || mom.v.size() != p.size()) {
    throw Error(ErrorKind::DimensionMismatch, "gradient/parameter sizes differ");
  }
  for (std::size_t i = 0; i < p.size(); ++i) adam_update(p[i], g[i], mom.m[i], mom.v[i], s);
}

}  // namespace

void adamw_step(QatState& state, const Gradients& grads, const QatConfig& cfg) {
  state.validate(cfg);
  if (grads.layers.size() != state.layers.size()) {
    throw Error(ErrorKind::DimensionMismatch, "gradient depth does not match the state");
  }
  ++state.step;
  const auto t = static_cast<double>(state.step);
  const auto& o = cfg.optimizer;
  const double bias1 = 1.0 - std::pow(o.beta1, t);
  const double bias2 = 1.0 - std::pow(o.beta2, t);
  const AdamStep decayed{cfg.lr_base, o.weight_decay, o.beta1, o.beta2, o.eps, bias1, bias2};
  const AdamStep plain{cfg.lr_base, 0.0, o.beta1, o.beta2, o.eps, bias1, bias2};
  const AdamStep scale{cfg.lr_lsq_scale, 0.0, o.beta1, o.beta2, o.eps, bias1, bias2};
  for (std::size_t l = 0; l < state.layers.size(); ++l) {
    Layer& L = state.layers[l];
    LayerMoments& M = state.moments[l];
    const LayerGrads& G = grads.layers[l];
    adam_update(L.W, G.W, M.W, decayed);
    adam_update(L.bias, G.bias, M.bias, plain);
    adam_update(L.A, G.A, M.A, decayed);
    adam_update(L.B, G.B, M.B, decayed);
    adam_update(L.s_w, G.s_w, M.s_w.m[0], M.s_w.v[0], scale);
    adam_update(L.s_a, G.s_a, M.s_a.m[0], M.s_a.v[0], scale);
    L.s_w = std::max(L.s_w, kMinScale);
    L.s_a = std::max(L.s_a, kMinScale);
  }
}

void calibrate_lsq_scales(QatState& state, const QatConfig& cfg, const Tensor& calibration) {
  const ForwardResult fp = forward(state, full_precision(cfg), calibration);
  for (std::size_t l = 0; l < state.layers.size(); ++l) {
    Layer& L = state.layers[l];
    if (cfg.quantize_weights()) {
      const float m = max_abs(L.W);
      L.s_w = m > 0.0f ? m / symmetric_qmax(cfg.bits_w) : 1.0f;
    }
    if (cfg.quantize_activations()) {
      const float m = max_abs(fp.tape.layers[l].a);
      L.s_a = m > 0.0f ? m / symmetric_qmax(cfg.bits_a) : 1.0f;
    }
  }
}

namespace {

// Row-normalized copy in double; zero rows stay zero. Returns the norms.
std::vector<double> normalize_rows(std::span<const float> y, std::size_t rows, std::size_t cols,
                                   std::vector<double>& unit) {
  unit.assign(rows * cols, 0.0);
  std::vector<double> norms(rows, 0.0);
  for (std::size_t b = 0; b < rows; ++b) {
    double sq = 0.0;
    for (std::size_t j = 0; j < cols; ++j) sq += static_cast<double>(y[b * cols + j]) * y[b * cols + j];
    norms[b] = std::sqrt(sq);
    if (norms[b] > 0.0) {
      for (std::size_t j = 0; j < cols; ++j) unit[b * cols + j] = y[b * cols + j] / norms[b];
    }
  }
  return norms;
}

std::vector<double> cosine_logits(const std::vector<double>& unit, std::size_t rows,
                                  std::size_t cols, const Tensor& text, double scale) {
  const std::size_t c = text.dim(0);
  std::vector<double> z(rows * c, 0.0);
  for (std::size_t b = 0; b < rows; ++b) {
    for (std::size_t k = 0; k < c; ++k) {
      const auto t = text.row(k);
      double dot = 0.0;
      for (std::size_t j = 0; j < cols; ++j) dot += unit[b * cols + j] * t[j];
      z[b * c + k] = scale * dot;
    }
  }
  return z;
}

// Softmax of row b of z / temperature, returned with its log-normalizer.
double softmax_row(const std::vector<double>& z, std::size_t b, std::size_t c, double inv_t,
                   std::vector<double>& p) {
  p.assign(c, 0.0);
  double m = -INFINITY;
  for (std::size_t k = 0; k < c; ++k) m = std::max(m, inv_t * z[b * c + k]);
  double s = 0.0;
  for (std::size_t k = 0; k < c; ++k) {
    p[k] = std::exp(inv_t * z[b * c + k] - m);
    s += p[k];
  }
  for (double& v : p) v /= s;
  return m + std::log(s);
}

}  // namespace

LossResult head_loss(const QatConfig& cfg, const Tensor& y, std::span<const std::int64_t> labels,
                     const Tensor& class_text, double logit_scale, const Tensor* teacher_y) {
  require_matrix(y, "head output");
  require_matrix(class_text, "class_text");
  const std::size_t nb = y.dim(0);
  const std::size_t d = y.dim(1);
  const std::size_t c = class_text.dim(0);
  if (class_text.dim(1) != d) {
    throw Error(ErrorKind::DimensionMismatch, "class_text width differs from head output width");
  }
  if (labels.size() != nb) throw Error(ErrorKind::LengthMismatch, "one label per row required");
  const bool distill = cfg.distill.kind != DistillKind::None;
  if (distill && (!teacher_y || teacher_y->shape() != y.shape())) {
    throw Error(ErrorKind::InvalidArgument, "distillation needs teacher outputs of equal shape");
  }
  const double w_task = distill ? 1.0 - cfg.distill.alpha : 1.0;
  const double w_dist = distill ? cfg.distill.alpha : 0.0;

  std::vector<double> unit;
  const std::vector<double> norms = normalize_rows(y.values(), nb, d, unit);
  const std::vector<double> z = cosine_logits(unit, nb, d, class_text, logit_scale);

  LossResult res;
  std::vector<double> grad_z(nb * c, 0.0);
  std::vector<double> grad_unit(nb * d, 0.0);
  std::vector<double> p;

  std::size_t labeled = 0;
  for (std::int64_t t : labels) labeled += t >= 0 ? 1 : 0;
  if (labeled > 0) {
    const double inv_n = 1.0 / static_cast<double>(labeled);
    for (std::size_t b = 0; b < nb; ++b) {
      if (labels[b] < 0) continue;
      const auto yb = static_cast<std::size_t>(labels[b]);
      if (yb >= c) throw Error(ErrorKind::InvalidArgument, "label out of range");
      const double lse = softmax_row(z, b, c, 1.0, p);
      res.task += (lse - z[b * c + yb]) * inv_n;
      for (std::size_t k = 0; k < c; ++k) {
        grad_z[b * c + k] += w_task * inv_n * (p[k] - (k == yb ? 1.0 : 0.0));
      }
    }
  }

  if (distill) {
    std::vector<double> t_unit;
    normalize_rows(teacher_y->values(), nb, d, t_unit);
    if (cfg.distill.kind == DistillKind::MseNormalizedFeatures) {
      const double inv = 1.0 / static_cast<double>(nb * d);
      for (std::size_t i = 0; i < nb * d; ++i) {
        const double diff = unit[i] - t_unit[i];
        res.distill += diff * diff * inv;
        grad_unit[i] += w_dist * 2.0 * diff * inv;
      }
    } else {
      const std::vector<double> zt = cosine_logits(t_unit, nb, d, class_text, logit_scale);
      const double inv_t = 1.0 / cfg.distill.tau;
      const double inv_n = 1.0 / static_cast<double>(nb);
      std::vector<double> pt;
      for (std::size_t b = 0; b < nb; ++b) {
        const double lse_s = softmax_row(z, b, c, inv_t, p);
        const double lse_t = softmax_row(zt, b, c, inv_t, pt);
        for (std::size_t k = 0; k < c; ++k) {
          if (pt[k] > 0.0) {
            const double log_pt = inv_t * zt[b * c + k] - lse_t;
            const double log_ps = inv_t * z[b * c + k] - lse_s;
            res.distill += inv_n * pt[k] * (log_pt - log_ps);
          }
          grad_z[b * c + k] += w_dist * inv_n * inv_t * (p[k] - pt[k]);
        }
      }
    }
  }
  res.total = w_task * res.task + w_dist * res.distill;

  // Back through the cosine logits and the row normalization.
  for (std::size_t b = 0; b < nb; ++b) {
    for (std::size_t k = 0; k < c; ++k) {
      const double gz = grad_z[b * c + k] * logit_scale;
      if (gz == 0.0) continue;
      const auto t = class_text.row(k);
      for (std::size_t j = 0; j < d; ++j) grad_unit[b * d + j] += gz * t[j];
    }
  }
  std::vector<float> gy(nb * d, 0.0f);
  for (std::size_t b = 0; b < nb; ++b) {
    if (!(norms[b] > 0.0)) continue;
    double dot = 0.0;
    for (std::size_t j = 0; j < d; ++j) dot += unit[b * d + j] * grad_unit[b * d + j];
    for (std::size_t j = 0; j < d; ++j) {
      gy[b * d + j] = static_cast<float>((grad_unit[b * d + j] - unit[b * d + j] * dot) / norms[b]);
    }
  }
  res.grad_y = Tensor::f32({nb, d}, std::move(gy));
  return res;
}

Tensor apply_head(const QatState& state, const QatConfig& cfg, const Tensor& x) {
  require_matrix(x, "head input");
  const std::size_t n = x.dim(0);
  const std::size_t din = x.dim(1);
  const std::size_t dout = cfg.layer_dims.back();
  std::vector<float> out;
  out.reserve(n * dout);
  for (std::size_t start = 0; start < n; start += cfg.batch) {
    const std::size_t rows = std::min(cfg.batch, n - start);
    const auto src = x.values().subspan(start * din, rows * din);
    const Tensor chunk = Tensor::f32({rows, din}, std::vector<float>(src.begin(), src.end()));
    const ForwardResult fr = forward(state, cfg, chunk);
    out.insert(out.end(), fr.y.values().begin(), fr.y.values().end());
  }
  return Tensor::f32({n, dout}, std::move(out));
}

zeroshot::LogitSet head_logits(const QatState& state, const QatConfig& cfg, const EmbeddingSet& e) {
  const Tensor y = apply_head(state, cfg, e.image);
  const std::size_t n = y.dim(0);
  const std::size_t d = y.dim(1);
  if (e.class_text.dim(1) != d) {
    throw Error(ErrorKind::DimensionMismatch, "class_text width differs from head output width");
  }
  std::vector<double> unit;
  normalize_rows(y.values(), n, d, unit);
  const std::vector<double> z = cosine_logits(unit, n, d, e.class_text, e.logit_scale);
  std::vector<float> zf(z.begin(), z.end());
  return zeroshot::LogitSet{Tensor::f32({n, e.class_text.dim(0)}, std::move(zf)), e.labels};
}

TrainResult train(const QatConfig& cfg, const QatState& initial, const EmbeddingSet& train_set,
                  const std::vector<NamedSet>& eval_sets, const std::vector<std::size_t>& checkpoints) {
  cfg.validate();
  initial.validate(cfg);
  train_set.validate();
  const std::size_t n = train_set.rows();
  if (train_set.embed_dim() != cfg.layer_dims.front()) {
    throw Error(ErrorKind::DimensionMismatch, "training embeddings do not match layer_dims[0]");
  }
  if (train_set.class_text.dim(1) != cfg.layer_dims.back()) {
    throw Error(ErrorKind::DimensionMismatch, "class text width does not match the head output");
  }
  const std::size_t unique = cfg.unique_samples.value_or(n);
  if (unique > n || unique == 0) {
    throw Error(ErrorKind::InvalidArgument, "unique_samples (" + std::to_string(unique) +
                                                ") exceeds the training set (" + std::to_string(n) + ")");
  }
  const std::set<std::size_t> marks(checkpoints.begin(), checkpoints.end());
  const QatConfig teacher_cfg = full_precision(cfg);
  const bool distill = cfg.distill.kind != DistillKind::None;

  TrainResult result;
  QatState state = initial;
  QatState last_good = initial;

  const auto evaluate = [&](std::size_t step) {
    for (const NamedSet& es : eval_sets) {
      const zeroshot::LogitSet logits = head_logits(state, cfg, es.set);
      result.timeline.push_back(
          {step, es.name, zeroshot::accuracy(logits), metrics::ece(logits).ece});
    }
    last_good = state;
  };

  if (marks.count(0)) evaluate(0);

  const std::size_t din = train_set.embed_dim();
  const auto img = train_set.image.values();
  const auto lab = train_set.labels.labels();
  std::vector<float> xb(cfg.batch * din);
  std::vector<std::int64_t> yb(cfg.batch);
  for (std::size_t step = 1; step <= cfg.steps; ++step) {
    for (std::size_t i = 0; i < cfg.batch; ++i) {
      const std::size_t row = ((step - 1) * cfg.batch + i) % unique;
      std::copy_n(img.begin() + static_cast<std::ptrdiff_t>(row * din), din,
                  xb.begin() + static_cast<std::ptrdiff_t>(i * din));
      yb[i] = lab[row];
    }
    const Tensor x = Tensor::f32({cfg.batch, din}, xb);
    try {
      const ForwardResult fr = forward(state, cfg, x);
      std::optional<Tensor> teacher;
      if (distill) teacher = forward(initial, teacher_cfg, x).y;
      const LossResult loss = head_loss(cfg, fr.y, yb, train_set.class_text, train_set.logit_scale,
                                        teacher ? &*teacher : nullptr);
      if (!std::isfinite(loss.total)) {
        throw Error(ErrorKind::NumericalDivergence, "loss is not finite");
      }
      const Gradients grads = backward(state, cfg, fr.tape, loss.grad_y);
      if (!grads.all_finite()) throw Error(ErrorKind::NumericalDivergence, "gradients are not finite");
      adamw_step(state, grads, cfg);
      if (!state.all_finite()) throw Error(ErrorKind::NumericalDivergence, "parameters are not finite");
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::NumericalDivergence) throw;
      result.diverged = true;
      result.message = "step " + std::to_string(step) + ": " + e.what();
      result.state = std::move(last_good);
      return result;
    }
    if (marks.count(step)) evaluate(step);
  }
  result.state = std::move(state);
  return result;
}

std::string timeline_csv(const std::vector<TimelineRow>& rows) {
  std::string out = "step,set,accuracy,ece\n";
  char buf[128];
  for (const TimelineRow& r : rows) {
    std::snprintf(buf, sizeof buf, ",%.6g,%.6g\n", r.accuracy, r.ece);
    out += std::to_string(r.step) + "," + r.set + buf;
  }
  return out;
}

TensorBundle QatState::to_bundle() const {
  TensorBundle b;
  nlohmann::ordered_json dims = nlohmann::ordered_json::array();
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const Layer& L = layers[l];
    const LayerMoments& M = moments[l];
    const std::size_t r = L.in ? L.A.size() / L.in : 0;
    const std::string p = "layer" + std::to_string(l) + ".";
    b.put(p + "W", Tensor::f32({L.out, L.in}, L.W));
    b.put(p + "bias", Tensor::f32({L.out}, L.bias));
    b.put(p + "A", Tensor::f32({r, L.in}, L.A));
    b.put(p + "B", Tensor::f32({L.out, r}, L.B));
    b.put(p + "s_w", Tensor::f32({1}, {L.s_w}));
    b.put(p + "s_a", Tensor::f32({1}, {L.s_a}));
    const auto put_moments = [&](const std::string& name, const Moments& m, Shape shape) {
      b.put(p + name + ".m", Tensor::f32(shape, m.m));
      b.put(p + name + ".v", Tensor::f32(shape, m.v));
    };
    put_moments("W", M.W, {L.out, L.in});
    put_moments("bias", M.bias, {L.out});
    put_moments("A", M.A, {r, L.in});
    put_moments("B", M.B, {L.out, r});
    put_moments("s_w", M.s_w, {1});
    put_moments("s_a", M.s_a, {1});
    if (l == 0) dims.push_back(L.in);
    dims.push_back(L.out);
  }
  b.meta["kind"] = "qat_state";
  b.meta["step"] = step;
  b.meta["layer_dims"] = dims;
  return b;
}

QatState QatState::from_bundle(const TensorBundle& bundle) {
  QatState s;
  for (std::size_t l = 0;; ++l) {
    const std::string p = "layer" + std::to_string(l) + ".";
    if (!bundle.contains(p + "W")) break;
    const auto vec = [&](const std::string& name) {
      const auto v = bundle.at(p + name).values();
      return std::vector<float>(v.begin(), v.end());
    };
    Layer L;
    const Tensor& W = bundle.at(p + "W");
    if (W.rank() != 2) throw Error(ErrorKind::DimensionMismatch, p + "W must be rank 2");
    L.out = W.dim(0);
    L.in = W.dim(1);
    L.W = vec("W");
    L.bias = vec("bias");
    L.A = vec("A");
    L.B = vec("B");
    L.s_w = bundle.at(p + "s_w").values()[0];
    L.s_a = bundle.at(p + "s_a").values()[0];
    LayerMoments M;
    const auto load = [&](const std::string& name, std::size_t size) {
      if (bundle.contains(p + name + ".m")) return Moments{vec(name + ".m"), vec(name + ".v")};
      return zero_moments(size);
    };
    M.W = load("W", L.W.size());
    M.bias = load("bias", L.bias.size());
    M.A = load("A", L.A.size());
    M.B = load("B", L.B.size());
    M.s_w = load("s_w", 1);
    M.s_a = load("s_a", 1);
    s.layers.push_back(std::move(L));
    s.moments.push_back(std::move(M));
  }
  if (s.layers.empty()) throw Error(ErrorKind::InvalidArgument, "bundle holds no QAT layers");
  if (auto st = bundle.meta_number("step")) s.step = static_cast<std::size_t>(*st);
  return s;
}

}  // namespace qreli::qat
