// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#include "table.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>

#include "qreli/bundle.hpp"
#include "qreli/error.hpp"

namespace qreli::cli {

namespace {

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string quote(const std::string& f) {
  if (f.find_first_of(",\"\n") == std::string::npos) return f;
  std::string out = "\"";
  for (char c : f) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

std::vector<std::string> split_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  if (quoted) {
    throw Error(ErrorKind::InvalidArgument, "CSV line " + std::to_string(line_no) + ": unterminated quote");
  }
  out.push_back(std::move(cur));
  return out;
}

}  // namespace

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 6);
  return std::string(buf, ec == std::errc() ? p : buf);
}

std::optional<std::size_t> CsvTable::column(const std::string& name) const {
  const auto it = std::find(header.begin(), header.end(), name);
  if (it == header.end()) return std::nullopt;
  return static_cast<std::size_t>(it - header.begin());
}

std::string CsvTable::to_string(const std::vector<std::string>& comments) const {
  std::string out;
  for (const std::string& c : comments) out += c + '\n';
  const auto line = [&](const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      out += quote(fields[i]);
    }
    out += '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
  return out;
}

CsvTable parse_csv(const std::string& text) {
  CsvTable t;
  bool have_header = false;
  std::size_t pos = 0;
  std::size_t line_no = 0;
  while (pos < text.size()) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    std::string line = text.substr(pos, nl - pos);
    pos = nl + 1;
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields = split_line(line, line_no);
    if (!have_header) {
      t.header = std::move(fields);
      have_header = true;
    } else {
      if (fields.size() != t.header.size()) {
        throw Error(ErrorKind::InvalidArgument, "CSV line " + std::to_string(line_no) + " has " +
                                                    std::to_string(fields.size()) + " fields, header has " +
                                                    std::to_string(t.header.size()));
      }
      t.rows.push_back(std::move(fields));
    }
  }
  if (!have_header) throw Error(ErrorKind::InvalidArgument, "CSV has no header line");
  return t;
}

CsvTable read_csv(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  try {
    return parse_csv(std::string(bytes.begin(), bytes.end()));
  } catch (const Error& e) {
    throw Error(e.kind(), path.string() + ": " + e.what());
  }
}

CsvTable concat_sorted(const std::vector<CsvTable>& tables) {
  if (tables.empty()) throw Error(ErrorKind::InvalidArgument, "report needs at least one table");
  CsvTable out;
  out.header = tables.front().header;
  for (const CsvTable& t : tables) {
    if (t.header != out.header) {
      std::string a, b;
      for (const auto& h : out.header) a += (a.empty() ? "" : ",") + h;
      for (const auto& h : t.header) b += (b.empty() ? "" : ",") + h;
      throw Error(ErrorKind::HeaderMismatch, "column headers differ: [" + a + "] vs [" + b + "]");
    }
    out.rows.insert(out.rows.end(), t.rows.begin(), t.rows.end());
  }
  const auto sc = out.column("scenario");
  const auto me = out.column("method");
  if (sc || me) {
    std::stable_sort(out.rows.begin(), out.rows.end(), [&](const auto& x, const auto& y) {
      if (sc && x[*sc] != y[*sc]) return x[*sc] < y[*sc];
      return me ? x[*me] < y[*me] : false;
    });
  }
  return out;
}

CsvTable with_relative_delta(const CsvTable& table, const CsvTable& baseline) {
  const std::vector<std::string> keys{"scenario", "scorer"};
  std::vector<std::size_t> tk, bk;
  for (const auto& k : keys) {
    const auto a = table.column(k);
    const auto b = baseline.column(k);
    if (!a || !b) throw Error(ErrorKind::HeaderMismatch, "delta needs column '" + k + "' in both files");
    tk.push_back(*a);
    bk.push_back(*b);
  }
  // Numeric columns: every cell of the table parses as a number.
  std::vector<std::size_t> metrics;
  for (std::size_t c = 0; c < table.header.size(); ++c) {
    if (std::find(tk.begin(), tk.end(), c) != tk.end() || table.rows.empty()) continue;
    const bool numeric = std::all_of(table.rows.begin(), table.rows.end(),
                                     [c](const auto& r) { return parse_number(r[c]).has_value(); });
    if (numeric) metrics.push_back(c);
  }
  std::vector<std::size_t> base_cols;
  for (std::size_t c : metrics) {
    const auto b = baseline.column(table.header[c]);
    if (!b) throw Error(ErrorKind::HeaderMismatch, "baseline lacks column '" + table.header[c] + "'");
    base_cols.push_back(*b);
  }
  std::map<std::vector<std::string>, const std::vector<std::string>*> index;
  for (const auto& r : baseline.rows) {
    std::vector<std::string> key;
    for (std::size_t k : bk) key.push_back(r[k]);
    index.emplace(std::move(key), &r);  // first occurrence wins
  }

  CsvTable out = table;
  for (std::size_t c : metrics) out.header.push_back(table.header[c] + "_rel_delta");
  for (auto& r : out.rows) {
    std::vector<std::string> key;
    for (std::size_t k : tk) key.push_back(r[k]);
    const auto it = index.find(key);
    for (std::size_t m = 0; m < metrics.size(); ++m) {
      std::optional<double> b;
      if (it != index.end()) b = parse_number((*it->second)[base_cols[m]]);
      if (!b) {
        r.emplace_back();
        continue;
      }
      const double v = *parse_number(r[metrics[m]]);
      r.push_back(format_number(v == *b ? 0.0 : (v - *b) / std::fabs(*b)));
    }
  }
  return out;
}

nlohmann::ordered_json table_json(const CsvTable& t) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (const auto& r : t.rows) {
    nlohmann::ordered_json o = nlohmann::ordered_json::object();
    for (std::size_t c = 0; c < t.header.size(); ++c) {
      const auto v = parse_number(r[c]);
      if (v && std::isfinite(*v)) {
        o[t.header[c]] = *v;
      } else {
        o[t.header[c]] = r[c];
      }
    }
    rows.push_back(std::move(o));
  }
  return nlohmann::ordered_json{{"columns", t.header}, {"rows", rows}};
}

}  // namespace qreli::cli
