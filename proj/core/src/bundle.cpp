// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#include "qreli/bundle.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

namespace qreli {

using ojson = nlohmann::ordered_json;

const Tensor& TensorBundle::at(const std::string& name) const {
  auto it = entries.find(name);
  if (it == entries.end()) {
    throw Error(ErrorKind::InvalidArgument, "bundle has no entry '" + name + "'");
  }
  return it->second;
}

void TensorBundle::put(const std::string& name, Tensor t) {
  if (name.empty()) throw Error(ErrorKind::InvalidArgument, "entry names must be non-empty");
  entries.insert_or_assign(name, std::move(t));
}

std::optional<double> TensorBundle::meta_number(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) return std::nullopt;
  if (it->is_number()) return it->get<double>();
  if (it->is_string()) {
    try {
      return std::stod(it->get<std::string>());
    } catch (const std::exception&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

std::optional<std::string> TensorBundle::meta_string(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) return std::nullopt;
  if (it->is_string()) return it->get<std::string>();
  return it->dump();
}

bool TensorBundle::meta_flag(const std::string& key) const {
  auto it = meta.find(key);
  if (it == meta.end()) return false;
  if (it->is_boolean()) return it->get<bool>();
  if (it->is_string()) return it->get<std::string>() == "true";
  return false;
}

namespace {

template <typename T>
void put_le(std::vector<std::uint8_t>& out, T value) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  auto bits = std::bit_cast<U>(value);
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    out.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
  }
}

template <typename T>
T get_le(const std::uint8_t* p) {
  using U = std::conditional_t<sizeof(T) == 4, std::uint32_t, std::uint64_t>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) bits |= static_cast<U>(p[i]) << (8 * i);
  return std::bit_cast<T>(bits);
}

}  // namespace

std::vector<std::uint8_t> encode_bundle(const TensorBundle& bundle, WriteOptions opts) {
  if (!bundle.meta.is_object()) {
    throw Error(ErrorKind::InvalidArgument, "bundle meta must be a JSON object");
  }
  ojson entries = ojson::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : bundle.entries) {
    if (name.empty()) throw Error(ErrorKind::InvalidArgument, "entry names must be non-empty");
    if (!opts.allow_nonfinite && !t.all_finite()) {
      throw Error(ErrorKind::NonFinite, "entry '" + name + "' holds non-finite values");
    }
    const std::uint64_t byte_len = t.size() * dtype_size(t.dtype());
    ojson e;
    e["name"] = name;
    e["dtype"] = dtype_name(t.dtype());
    e["shape"] = t.shape();
    e["offset"] = offset;
    e["byte_len"] = byte_len;
    entries.push_back(std::move(e));
    offset += byte_len;
  }
  ojson manifest;
  manifest["entries"] = std::move(entries);
  manifest["meta"] = bundle.meta;
  const std::string text = manifest.dump();

  std::vector<std::uint8_t> out;
  out.reserve(kBundleHeaderSize + text.size() + offset);
  out.insert(out.end(), std::begin(kBundleMagic), std::end(kBundleMagic));
  put_le<std::uint64_t>(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& [name, t] : bundle.entries) {
    if (t.dtype() == DType::F32) {
      for (float x : t.values()) put_le<float>(out, x);
    } else {
      for (std::int64_t x : t.labels()) put_le<std::int64_t>(out, x);
    }
  }
  return out;
}

TensorBundle decode_bundle(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kBundleMagic, 4) != 0) {
    throw Error(ErrorKind::BadMagic, "missing QRB1 magic");
  }
  if (bytes.size() < kBundleHeaderSize) throw Error(ErrorKind::Truncated, "header cut short");
  const auto manifest_len = get_le<std::uint64_t>(bytes.data() + 4);
  if (manifest_len > bytes.size() - kBundleHeaderSize) {
    throw Error(ErrorKind::Truncated, "manifest extends past end of file");
  }
  const auto* manifest_begin = reinterpret_cast<const char*>(bytes.data() + kBundleHeaderSize);
  ojson manifest;
  try {
    manifest = ojson::parse(manifest_begin, manifest_begin + manifest_len);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadManifest, e.what());
  }
  if (!manifest.is_object() || !manifest.contains("entries") || !manifest["entries"].is_array()) {
    throw Error(ErrorKind::BadManifest, "manifest lacks an entries array");
  }

  const std::uint8_t* payload = bytes.data() + kBundleHeaderSize + manifest_len;
  const std::uint64_t payload_len = bytes.size() - kBundleHeaderSize - manifest_len;

  TensorBundle bundle;
  if (manifest.contains("meta")) {
    if (!manifest["meta"].is_object()) throw Error(ErrorKind::BadManifest, "meta is not an object");
    bundle.meta = manifest["meta"];
  }

  std::set<std::string> seen;
  for (const auto& e : manifest["entries"]) {
    std::string name;
    std::string dtype;
    Shape shape;
    std::uint64_t offset = 0;
    std::uint64_t byte_len = 0;
    try {
      name = e.at("name").get<std::string>();
      dtype = e.at("dtype").get<std::string>();
      shape = e.at("shape").get<Shape>();
      offset = e.at("offset").get<std::uint64_t>();
      byte_len = e.at("byte_len").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& ex) {
      throw Error(ErrorKind::BadManifest, ex.what());
    }
    if (name.empty() || !seen.insert(name).second) {
      throw Error(ErrorKind::BadManifest, "entry names must be unique and non-empty");
    }
    if (dtype != "f32" && dtype != "i64") {
      throw Error(ErrorKind::BadManifest, "unsupported dtype '" + dtype + "'");
    }
    const std::size_t width = dtype == "f32" ? 4 : 8;
    const std::size_t count = element_count(shape);
    if (byte_len != width * count) {
      throw Error(ErrorKind::ShapeMismatch, "entry '" + name + "' byte_len " +
                                                std::to_string(byte_len) + " disagrees with shape");
    }
    if (offset > payload_len || byte_len > payload_len - offset) {
      throw Error(ErrorKind::Truncated, "entry '" + name + "' extends past end of payload");
    }
    const std::uint8_t* p = payload + offset;
    if (dtype == "f32") {
      std::vector<float> data(count);
      for (std::size_t i = 0; i < count; ++i) data[i] = get_le<float>(p + 4 * i);
      bundle.entries.emplace(name, Tensor::f32(std::move(shape), std::move(data)));
    } else {
      std::vector<std::int64_t> data(count);
      for (std::size_t i = 0; i < count; ++i) data[i] = get_le<std::int64_t>(p + 8 * i);
      bundle.entries.emplace(name, Tensor::i64(std::move(shape), std::move(data)));
    }
  }
  return bundle;
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for reading");
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(size);
  if (size > 0 && !in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(size))) {
    throw Error(ErrorKind::Io, "short read on '" + path.string() + "'");
  }
  return bytes;
}

void write_file_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "' for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(ErrorKind::Io, "write failed on '" + path.string() + "'");
}

void write_bundle(const TensorBundle& bundle, const std::filesystem::path& path,
                  WriteOptions opts) {
  write_file_bytes(path, encode_bundle(bundle, opts));
}

TensorBundle read_bundle(const std::filesystem::path& path) {
  return decode_bundle(read_file_bytes(path));
}

}  // namespace qreli
