// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "qreli/tensor.hpp"

namespace qreli {

/// Tensor-bundle file layout (all integers little-endian):
///
///   "QRB1" | u64 manifest_len | manifest (UTF-8 JSON) | payload
///
/// The manifest is `{"entries":[{name,dtype,shape,offset,byte_len},...],"meta":{...}}`
/// with offsets relative to the payload start. Entries are stored in name order.
inline constexpr char kBundleMagic[4] = {'Q', 'R', 'B', '1'};
inline constexpr std::size_t kBundleHeaderSize = 12;

struct TensorBundle {
  std::map<std::string, Tensor> entries;
  nlohmann::ordered_json meta = nlohmann::ordered_json::object();

  const Tensor& at(const std::string& name) const;
  bool contains(const std::string& name) const { return entries.count(name) != 0; }
  void put(const std::string& name, Tensor t);

  std::optional<double> meta_number(const std::string& key) const;
  std::optional<std::string> meta_string(const std::string& key) const;
  bool meta_flag(const std::string& key) const;

  friend bool operator==(const TensorBundle& a, const TensorBundle& b) = default;
};

struct WriteOptions {
  bool allow_nonfinite = false;
};

std::vector<std::uint8_t> encode_bundle(const TensorBundle& bundle, WriteOptions opts = {});
TensorBundle decode_bundle(const std::vector<std::uint8_t>& bytes);

void write_bundle(const TensorBundle& bundle, const std::filesystem::path& path,
                  WriteOptions opts = {});
TensorBundle read_bundle(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace qreli
