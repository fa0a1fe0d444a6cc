// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <string_view>

#include <nlohmann/json.hpp>

namespace qreli::cli {

/// Reads the TOML subset used by run configs: `[table]` and `[a.b]` headers,
/// `key = value` pairs with strings, integers, floats, booleans and
/// single-line arrays of those, and `#` comments. Throws ConfigParse with
/// the offending line number.
nlohmann::ordered_json parse_toml(std::string_view text);
nlohmann::ordered_json read_toml(const std::filesystem::path& path);

}  // namespace qreli::cli
