// Copyright 2026 The qreli Authors
// SPDX-License-Identifier: Apache-2.0

#include "toml.hpp"

#include <cctype>
#include <charconv>
#include <string>
#include <vector>

#include "qreli/bundle.hpp"
#include "qreli/error.hpp"

namespace qreli::cli {

namespace {

using json = nlohmann::ordered_json;

class LineParser {
 public:
  LineParser(std::string_view s, std::size_t line) : s_(s), line_(line) {}

  [[noreturn]] void fail(const std::string& msg) const {
    throw Error(ErrorKind::ConfigParse, "line " + std::to_string(line_) + ": " + msg);
  }

  void skip_ws() {
    while (pos_ < s_.size() && (s_[pos_] == ' ' || s_[pos_] == '\t')) ++pos_;
  }

  bool at_end_or_comment() {
    skip_ws();
    return pos_ >= s_.size() || s_[pos_] == '#';
  }

  bool consume(char c) {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  std::string key() {
    skip_ws();
    if (pos_ < s_.size() && s_[pos_] == '"') return quoted();
    const std::size_t start = pos_;
    while (pos_ < s_.size() && (std::isalnum(static_cast<unsigned char>(s_[pos_])) ||
                                s_[pos_] == '_' || s_[pos_] == '-')) {
      ++pos_;
    }
    if (pos_ == start) fail("expected a key");
    return std::string(s_.substr(start, pos_ - start));
  }

  std::vector<std::string> dotted_key() {
    std::vector<std::string> parts{key()};
    while (consume('.')) parts.push_back(key());
    return parts;
  }

  json value() {
    skip_ws();
    if (pos_ >= s_.size()) fail("missing value");
    const char c = s_[pos_];
    if (c == '"') return quoted();
    if (c == '[') {
      ++pos_;
      json arr = json::array();
      if (consume(']')) return arr;
      while (true) {
        arr.push_back(value());
        if (consume(']')) break;
        if (!consume(',')) fail("expected ',' or ']' in array");
        if (consume(']')) break;  // trailing comma
      }
      return arr;
    }
    const std::size_t start = pos_;
    while (pos_ < s_.size() && s_[pos_] != ',' && s_[pos_] != ']' && s_[pos_] != '#' &&
           s_[pos_] != ' ' && s_[pos_] != '\t') {
      ++pos_;
    }
    std::string tok(s_.substr(start, pos_ - start));
    if (tok == "true") return true;
    if (tok == "false") return false;
    std::erase(tok, '_');
    if (tok.empty()) fail("missing value");
    const bool is_float = tok.find_first_of(".eE") != std::string::npos || tok == "inf" ||
                          tok == "+inf" || tok == "-inf" || tok == "nan";
    if (!is_float) {
      std::int64_t v = 0;
      const char* b = tok.data() + (tok[0] == '+' ? 1 : 0);
      const auto [p, ec] = std::from_chars(b, tok.data() + tok.size(), v);
      if (ec != std::errc() || p != tok.data() + tok.size()) fail("bad value '" + tok + "'");
      return v;
    }
    try {
      std::size_t used = 0;
      const double v = std::stod(tok, &used);
      if (used != tok.size()) fail("bad number '" + tok + "'");
      return v;
    } catch (const std::logic_error&) {
      fail("bad number '" + tok + "'");
    }
  }

 private:
  std::string quoted() {
    ++pos_;  // opening quote
    std::string out;
    while (pos_ < s_.size() && s_[pos_] != '"') {
      char c = s_[pos_++];
      if (c == '\\') {
        if (pos_ >= s_.size()) break;
        const char e = s_[pos_++];
        switch (e) {
          case 'n': c = '\n'; break;
          case 't': c = '\t'; break;
          case '"': c = '"'; break;
          case '\\': c = '\\'; break;
          default: fail(std::string("unsupported escape \\") + e);
        }
      }
      out.push_back(c);
    }
    if (pos_ >= s_.size()) fail("unterminated string");
    ++pos_;
    return out;
  }

  std::string_view s_;
  std::size_t line_;
  std::size_t pos_ = 0;
};

json& descend(json& root, const std::vector<std::string>& path, std::size_t upto, const LineParser& lp) {
  json* node = &root;
  for (std::size_t i = 0; i < upto; ++i) {
    json& child = (*node)[path[i]];
    if (child.is_null()) child = json::object();
    if (!child.is_object()) lp.fail("'" + path[i] + "' is not a table");
    node = &child;
  }
  return *node;
}

}  // namespace

nlohmann::ordered_json parse_toml(std::string_view text) {
  json root = json::object();
  std::vector<std::string> table;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t nl = text.find('\n', pos);
    std::string_view line = text.substr(pos, nl == std::string_view::npos ? text.size() - pos : nl - pos);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    ++line_no;
    LineParser lp(line, line_no);
    if (!lp.at_end_or_comment()) {
      if (lp.consume('[')) {
        table = lp.dotted_key();
        if (!lp.consume(']')) lp.fail("expected ']'");
        descend(root, table, table.size(), lp);
      } else {
        const std::vector<std::string> k = lp.dotted_key();
        if (!lp.consume('=')) lp.fail("expected '='");
        json v = lp.value();
        if (!lp.at_end_or_comment()) lp.fail("trailing characters");
        std::vector<std::string> full = table;
        full.insert(full.end(), k.begin(), k.end());
        json& parent = descend(root, full, full.size() - 1, lp);
        if (parent.contains(full.back())) lp.fail("duplicate key '" + full.back() + "'");
        parent[full.back()] = std::move(v);
      }
    }
    if (nl == std::string_view::npos) break;
    pos = nl + 1;
  }
  return root;
}

nlohmann::ordered_json read_toml(const std::filesystem::path& path) {
  const std::vector<std::uint8_t> bytes = read_file_bytes(path);
  return parse_toml(std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

}  // namespace qreli::cli
