// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "qreli/qat.hpp"

namespace qreli::cli {

std::string_view version() noexcept;

/// Exit codes of run().
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;  // bad flags, invalid inputs, failed verification
inline constexpr int kExitIo = 2;     // unreadable or unwritable files

/// Entry point behind the `qreli` binary. argv[0] is the program name.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// QatConfig from the parsed TOML document. Keys mirror the struct fields;
/// `optimizer` and `distill` are tables; unique_samples may be "all".
/// Unknown keys and wrong types throw ConfigParse.
qat::QatConfig qat_config_from_json(const nlohmann::ordered_json& j);
nlohmann::ordered_json qat_config_to_json(const qat::QatConfig& cfg);

}  // namespace qreli::cli
