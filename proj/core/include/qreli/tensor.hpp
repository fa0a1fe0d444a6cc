// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <variant>
#include <vector>

#include "qreli/error.hpp"

namespace qreli {

enum class DType { F32, I64 };

std::string_view dtype_name(DType dtype) noexcept;
std::size_t dtype_size(DType dtype) noexcept;

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape) noexcept;

/// Dense row-major array. f32 carries numeric payloads; i64 is reserved for
/// label vectors.
class Tensor {
 public:
  Tensor() : shape_{0}, storage_(std::vector<float>{}) {}

  static Tensor f32(Shape shape, std::vector<float> data);
  static Tensor i64(Shape shape, std::vector<std::int64_t> data);
  static Tensor zeros(Shape shape);

  DType dtype() const noexcept;
  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept;
  std::size_t dim(std::size_t axis) const;

  /// Throws InvalidArgument when the dtype is not f32.
  std::span<const float> values() const;
  std::span<float> values();
  /// Throws InvalidArgument when the dtype is not i64.
  std::span<const std::int64_t> labels() const;
  std::span<std::int64_t> labels();

  /// Row `i` of a rank-2 f32 tensor.
  std::span<const float> row(std::size_t i) const;
  std::span<float> row(std::size_t i);

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Tensor(Shape shape, std::variant<std::vector<float>, std::vector<std::int64_t>> storage)
      : shape_(std::move(shape)), storage_(std::move(storage)) {}

  Shape shape_;
  std::variant<std::vector<float>, std::vector<std::int64_t>> storage_;
};

/// Scales every row of an N x D tensor to unit L2 norm. Throws ZeroRow.
Tensor cosine_normalize(const Tensor& t);

/// Requires a rank-2 f32 tensor; throws DimensionMismatch otherwise.
void require_matrix(const Tensor& t, std::string_view what);

}  // namespace qreli
