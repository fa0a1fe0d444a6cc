// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace qreli::cli {

std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::filesystem::path& path);

struct InputDigest {
  std::string role;  // flag that named the file, e.g. "id" or "train"
  std::string path;
  std::string sha256;
};

/// Provenance block embedded in every output artifact.
struct RunManifest {
  std::string subcommand;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::vector<InputDigest> inputs;
  std::uint64_t seed = 0;
  std::string version;

  /// Hashes `path` now and records it under `role`.
  void add_input(const std::string& role, const std::filesystem::path& path);

  nlohmann::ordered_json to_json() const;
  static RunManifest from_json(const nlohmann::ordered_json& j);

  /// Roles whose file no longer hashes to the recorded digest (missing files
  /// included). Empty when everything matches.
  std::vector<std::string> verify() const;
};

/// First line of every CSV artifact: "# qreli-manifest {compact json}".
inline constexpr std::string_view kCsvManifestPrefix = "# qreli-manifest ";

}  // namespace qreli::cli
