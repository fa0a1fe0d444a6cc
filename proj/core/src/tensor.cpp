// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#include "qreli/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>

namespace qreli {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DimensionMismatch: return "DimensionMismatch";
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::GridMismatch: return "GridMismatch";
    case ErrorKind::ZeroRow: return "ZeroRow";
    case ErrorKind::NonFinite: return "NonFinite";
    case ErrorKind::NoLabeledRows: return "NoLabeledRows";
    case ErrorKind::EmptySide: return "EmptySide";
    case ErrorKind::MissingNegatives: return "MissingNegatives";
    case ErrorKind::MixedScale: return "MixedScale";
    case ErrorKind::MismatchedTape: return "MismatchedTape";
    case ErrorKind::NumericalDivergence: return "NumericalDivergence";
    case ErrorKind::HeaderMismatch: return "HeaderMismatch";
    case ErrorKind::ConfigParse: return "ConfigParse";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::Truncated: return "Truncated";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::BadManifest: return "BadManifest";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

std::string_view dtype_name(DType dtype) noexcept {
  return dtype == DType::F32 ? "f32" : "i64";
}

std::size_t dtype_size(DType dtype) noexcept { return dtype == DType::F32 ? 4 : 8; }

std::size_t element_count(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

void check_count(const Shape& shape, std::size_t n) {
  if (element_count(shape) != n) {
    throw Error(ErrorKind::ShapeMismatch, "shape holds " + std::to_string(element_count(shape)) +
                                              " elements but data has " + std::to_string(n));
  }
}

}  // namespace

Tensor Tensor::f32(Shape shape, std::vector<float> data) {
  check_count(shape, data.size());
  return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::i64(Shape shape, std::vector<std::int64_t> data) {
  check_count(shape, data.size());
  return Tensor(std::move(shape), std::move(data));
}

Tensor Tensor::zeros(Shape shape) {
  const std::size_t n = element_count(shape);
  return Tensor(std::move(shape), std::vector<float>(n, 0.0f));
}

DType Tensor::dtype() const noexcept {
  return std::holds_alternative<std::vector<float>>(storage_) ? DType::F32 : DType::I64;
}

std::size_t Tensor::size() const noexcept {
  return std::visit([](const auto& v) { return v.size(); }, storage_);
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw Error(ErrorKind::DimensionMismatch, "axis " + std::to_string(axis) + " out of range");
  }
  return shape_[axis];
}

std::span<const float> Tensor::values() const {
  if (const auto* v = std::get_if<std::vector<float>>(&storage_)) return *v;
  throw Error(ErrorKind::InvalidArgument, "tensor is i64, expected f32");
}

std::span<float> Tensor::values() {
  if (auto* v = std::get_if<std::vector<float>>(&storage_)) return *v;
  throw Error(ErrorKind::InvalidArgument, "tensor is i64, expected f32");
}

std::span<const std::int64_t> Tensor::labels() const {
  if (const auto* v = std::get_if<std::vector<std::int64_t>>(&storage_)) return *v;
  throw Error(ErrorKind::InvalidArgument, "tensor is f32, expected i64");
}

std::span<std::int64_t> Tensor::labels() {
  if (auto* v = std::get_if<std::vector<std::int64_t>>(&storage_)) return *v;
  throw Error(ErrorKind::InvalidArgument, "tensor is f32, expected i64");
}

std::span<const float> Tensor::row(std::size_t i) const {
  const std::size_t d = shape_.at(1);
  return values().subspan(i * d, d);
}

std::span<float> Tensor::row(std::size_t i) {
  const std::size_t d = shape_.at(1);
  return values().subspan(i * d, d);
}

bool Tensor::all_finite() const noexcept {
  if (const auto* v = std::get_if<std::vector<float>>(&storage_)) {
    return std::all_of(v->begin(), v->end(), [](float x) { return std::isfinite(x); });
  }
  return true;
}

void require_matrix(const Tensor& t, std::string_view what) {
  if (t.rank() != 2 || t.dtype() != DType::F32) {
    throw Error(ErrorKind::DimensionMismatch, std::string(what) + " must be a rank-2 f32 tensor");
  }
}

Tensor cosine_normalize(const Tensor& t) {
  require_matrix(t, "cosine_normalize input");
  Tensor out = t;
  const std::size_t n = t.dim(0);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = out.row(i);
    double sq = 0.0;
    for (float x : r) sq += static_cast<double>(x) * x;
    if (!(sq > 0.0)) {
      throw Error(ErrorKind::ZeroRow, "row " + std::to_string(i) + " has zero norm");
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (float& x : r) x = static_cast<float>(x * inv);
  }
  return out;
}

}  // namespace qreli
