// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#include "qreli/zeroshot.hpp"

#include <cmath>

#include "qreli/parallel.hpp"

namespace qreli::zeroshot {

namespace {

void require_labels(const Tensor& labels, std::size_t n) {
  if (labels.dtype() != DType::I64 || labels.rank() != 1 || labels.dim(0) != n) {
    throw Error(ErrorKind::DimensionMismatch,
                "labels must be an i64 vector of length " + std::to_string(n));
  }
}

void check_unit_rows(const Tensor& t, const char* what) {
  for (std::size_t i = 0; i < t.dim(0); ++i) {
    double sq = 0.0;
    for (float x : t.row(i)) sq += static_cast<double>(x) * x;
    if (std::fabs(std::sqrt(sq) - 1.0) > 1e-4) {
      throw Error(ErrorKind::InvalidArgument,
                  std::string(what) + " row " + std::to_string(i) + " is not unit-norm");
    }
  }
}

}  // namespace

void EmbeddingSet::validate() const {
  require_matrix(image, "image");
  require_matrix(class_text, "class_text");
  if (image.dim(1) != class_text.dim(1)) {
    throw Error(ErrorKind::DimensionMismatch, "image and class_text embedding widths differ");
  }
  require_labels(labels, image.dim(0));
  const auto c = static_cast<std::int64_t>(class_text.dim(0));
  for (std::int64_t y : labels.labels()) {
    if (y < -1 || y >= c) {
      throw Error(ErrorKind::InvalidArgument, "label " + std::to_string(y) + " out of range");
    }
  }
  if (!image.all_finite() || !class_text.all_finite()) {
    throw Error(ErrorKind::NonFinite, "embeddings contain non-finite values");
  }
  if (!(logit_scale >= 0.0f) || !std::isfinite(logit_scale)) {
    throw Error(ErrorKind::InvalidArgument, "logit_scale must be finite and non-negative");
  }
}

EmbeddingSet EmbeddingSet::from_bundle(const TensorBundle& bundle) {
  EmbeddingSet e;
  e.image = bundle.at("image");
  e.class_text = bundle.at("class_text");
  if (bundle.contains("labels")) {
    e.labels = bundle.at("labels");
  } else {
    require_matrix(e.image, "image");
    e.labels = Tensor::i64({e.image.dim(0)}, std::vector<std::int64_t>(e.image.dim(0), -1));
  }
  if (auto s = bundle.meta_number("logit_scale")) e.logit_scale = static_cast<float>(*s);
  if (auto it = bundle.meta.find("class_names"); it != bundle.meta.end() && it->is_array()) {
    for (const auto& n : *it) e.names.push_back(n.get<std::string>());
  }
  e.validate();
  if (bundle.meta_flag("prenormalized")) {
    check_unit_rows(e.image, "image");
    check_unit_rows(e.class_text, "class_text");
  } else {
    e.image = cosine_normalize(e.image);
    e.class_text = cosine_normalize(e.class_text);
  }
  return e;
}

TensorBundle EmbeddingSet::to_bundle() const {
  TensorBundle b;
  b.put("image", image);
  b.put("labels", labels);
  b.put("class_text", class_text);
  b.meta["logit_scale"] = logit_scale;
  b.meta["prenormalized"] = true;
  if (!names.empty()) b.meta["class_names"] = names;
  return b;
}

std::size_t LogitSet::labeled_rows() const {
  std::size_t n = 0;
  for (std::int64_t y : labels.labels()) n += y >= 0 ? 1 : 0;
  return n;
}

void LogitSet::validate() const {
  require_matrix(logits, "logits");
  require_labels(labels, logits.dim(0));
  const auto c = static_cast<std::int64_t>(logits.dim(1));
  for (std::int64_t y : labels.labels()) {
    if (y < -1 || y >= c) {
      throw Error(ErrorKind::InvalidArgument, "label " + std::to_string(y) + " out of range");
    }
  }
  if (!logits.all_finite()) throw Error(ErrorKind::NonFinite, "logits contain non-finite values");
}

LogitSet LogitSet::from_bundle(const TensorBundle& bundle) {
  LogitSet l;
  l.logits = bundle.at("logits");
  if (bundle.contains("labels")) {
    l.labels = bundle.at("labels");
  } else {
    require_matrix(l.logits, "logits");
    l.labels = Tensor::i64({l.logits.dim(0)}, std::vector<std::int64_t>(l.logits.dim(0), -1));
  }
  l.validate();
  return l;
}

TensorBundle LogitSet::to_bundle() const {
  TensorBundle b;
  b.put("logits", logits);
  b.put("labels", labels);
  return b;
}

LogitSet zero_shot_logits(const EmbeddingSet& e) {
  require_matrix(e.image, "image");
  require_matrix(e.class_text, "class_text");
  const std::size_t n = e.image.dim(0);
  const std::size_t c = e.class_text.dim(0);
  const std::size_t d = e.image.dim(1);
  if (e.class_text.dim(1) != d) {
    throw Error(ErrorKind::DimensionMismatch, "image and class_text embedding widths differ");
  }
  require_labels(e.labels, n);

  Tensor logits = Tensor::zeros({n, c});
  const double scale = e.logit_scale;
  parallel_for(n, [&](std::size_t i) {
    const auto img = e.image.row(i);
    auto out = logits.row(i);
    for (std::size_t k = 0; k < c; ++k) {
      const auto txt = e.class_text.row(k);
      double dot = 0.0;
      for (std::size_t j = 0; j < d; ++j) dot += static_cast<double>(img[j]) * txt[j];
      out[k] = static_cast<float>(scale * dot);
    }
  });
  return LogitSet{std::move(logits), e.labels};
}

std::size_t argmax(std::span<const float> row) noexcept {
  std::size_t best = 0;
  for (std::size_t k = 1; k < row.size(); ++k) {
    if (row[k] > row[best]) best = k;
  }
  return best;
}

double accuracy(const LogitSet& l) {
  require_matrix(l.logits, "logits");
  require_labels(l.labels, l.logits.dim(0));
  const auto y = l.labels.labels();
  std::size_t labeled = 0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] < 0) continue;
    ++labeled;
    if (argmax(l.logits.row(i)) == static_cast<std::size_t>(y[i])) ++correct;
  }
  if (labeled == 0) throw Error(ErrorKind::NoLabeledRows, "accuracy needs labeled rows");
  return static_cast<double>(correct) / static_cast<double>(labeled);
}

double vulnerability(double acc_normal, double acc_counter) {
  const bool frac_a = acc_normal <= 1.0;
  const bool frac_b = acc_counter <= 1.0;
  if (frac_a != frac_b) {
    throw Error(ErrorKind::MixedScale, "one accuracy looks like a fraction, the other a percentage");
  }
  const double drop = acc_normal - acc_counter;
  return frac_a ? 100.0 * drop : drop;
}

}  // namespace qreli::zeroshot
