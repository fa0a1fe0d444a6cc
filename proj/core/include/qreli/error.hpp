// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qreli {

enum class ErrorKind {
  // Input validation.
  InvalidArgument,
  DimensionMismatch,
  LengthMismatch,
  GridMismatch,
  ZeroRow,
  NonFinite,
  NoLabeledRows,
  EmptySide,
  MissingNegatives,
  MixedScale,
  MismatchedTape,
  NumericalDivergence,
  HeaderMismatch,
  ConfigParse,
  // Tensor-bundle decoding.
  BadMagic,
  Truncated,
  ShapeMismatch,
  BadManifest,
  // Filesystem.
  Io,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// True for kinds that come from the filesystem rather than from the data.
constexpr bool is_io_error(ErrorKind kind) noexcept { return kind == ErrorKind::Io; }

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace qreli
