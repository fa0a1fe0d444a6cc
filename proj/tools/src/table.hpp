// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace qreli::cli {

/// "%.6g" with '.' decimal regardless of locale.
std::string format_number(double v);

/// Plain CSV table. Lines starting with '#' are comments (manifest lines);
/// fields containing ',' or '"' are quoted on output.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::optional<std::size_t> column(const std::string& name) const;
  /// Header plus rows, each line '\n'-terminated; `comment` lines come first.
  std::string to_string(const std::vector<std::string>& comments = {}) const;
};

CsvTable parse_csv(const std::string& text);
CsvTable read_csv(const std::filesystem::path& path);

/// Concatenates tables with identical headers (HeaderMismatch otherwise) and
/// stable-sorts rows by (scenario, method) when those columns exist.
CsvTable concat_sorted(const std::vector<CsvTable>& tables);

/// Appends "<metric>_rel_delta" = (v - b) / |b| for every numeric column,
/// matching rows to `baseline` by (scenario, scorer). Rows without a baseline
/// match get empty delta cells. Throws HeaderMismatch when the key columns or
/// metrics are missing from the baseline.
CsvTable with_relative_delta(const CsvTable& table, const CsvTable& baseline);

/// Rows as objects; cells that parse fully as numbers become JSON numbers.
nlohmann::ordered_json table_json(const CsvTable& t);

}  // namespace qreli::cli
