// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#include "manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <memory>

#include "qreli/bundle.hpp"
#include "qreli/error.hpp"

namespace qreli::cli {

std::string sha256_hex(std::span<const std::uint8_t> bytes) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), md.data(), &len) != 1) {
    throw Error(ErrorKind::Io, "SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[md[i] >> 4]);
    out.push_back(kHex[md[i] & 0xF]);
  }
  return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file_bytes(path)); }

void RunManifest::add_input(const std::string& role, const std::filesystem::path& path) {
  inputs.push_back({role, path.string(), sha256_file(path)});
}

nlohmann::ordered_json RunManifest::to_json() const {
  nlohmann::ordered_json j;
  j["subcommand"] = subcommand;
  j["config"] = config;
  j["inputs"] = nlohmann::ordered_json::array();
  for (const InputDigest& d : inputs) {
    j["inputs"].push_back({{"role", d.role}, {"path", d.path}, {"sha256", d.sha256}});
  }
  j["seed"] = seed;
  j["version"] = version;
  return j;
}

RunManifest RunManifest::from_json(const nlohmann::ordered_json& j) {
  try {
    RunManifest m;
    m.subcommand = j.at("subcommand").get<std::string>();
    m.config = j.at("config");
    for (const auto& d : j.at("inputs")) {
      m.inputs.push_back({d.at("role").get<std::string>(), d.at("path").get<std::string>(),
                          d.at("sha256").get<std::string>()});
    }
    m.seed = j.at("seed").get<std::uint64_t>();
    m.version = j.at("version").get<std::string>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::BadManifest, std::string("run manifest: ") + e.what());
  }
}

std::vector<std::string> RunManifest::verify() const {
  std::vector<std::string> bad;
  for (const InputDigest& d : inputs) {
    try {
      if (sha256_file(d.path) != d.sha256) bad.push_back(d.role);
    } catch (const Error&) {
      bad.push_back(d.role);
    }
  }
  return bad;
}

}  // namespace qreli::cli
