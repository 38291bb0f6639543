#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "igroup/error.hpp"

namespace igroup::csv {

inline std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t") - b + 1);
}

/// Splits one CSV line. Double-quoted fields may contain commas and doubled
/// quotes; surrounding whitespace of unquoted fields is trimmed.
inline std::vector<std::string> split_line(std::string_view line) {
  std::vector<std::string> out;
  std::string field;
  bool quoted = false;
  bool was_quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          field += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        field += c;
      }
    } else if (c == '"') {
      quoted = true;
      was_quoted = true;
    } else if (c == ',') {
      out.push_back(was_quoted ? field : std::string(trim(field)));
      field.clear();
      was_quoted = false;
    } else if (c != '\r') {
      field += c;
    }
  }
  out.push_back(was_quoted ? field : std::string(trim(field)));
  return out;
}

inline std::optional<double> parse_double(std::string_view s) {
  s = trim(s);
  if (s.empty()) return std::nullopt;
  if (s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

struct Table {
  std::string origin;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<std::size_t> line_numbers;
  std::size_t malformed = 0;  // rows whose field count differs from the header

  std::optional<std::size_t> column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
      if (header[i] == name) return i;
    }
    return std::nullopt;
  }

  /// Column indices for `names`; a schema error lists every expected column
  /// when any is missing.
  std::vector<std::size_t> require(const std::vector<std::string>& names) const {
    std::vector<std::size_t> idx;
    std::string missing;
    for (const auto& n : names) {
      if (auto c = column(n)) {
        idx.push_back(*c);
      } else {
        missing += (missing.empty() ? "" : ", ") + n;
      }
    }
    if (!missing.empty()) {
      std::string expected;
      for (const auto& n : names) expected += (expected.empty() ? "" : ", ") + n;
      fail(ErrorKind::Schema, origin + ": missing column(s) " + missing + "; expected " + expected);
    }
    return idx;
  }
};

inline Table parse(std::string_view text, std::string origin = "csv") {
  Table t;
  t.origin = std::move(origin);
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty() || trim(line) == "\r") continue;
    auto fields = split_line(line);
    if (!have_header) {
      if (!fields.empty() && fields[0].starts_with("\xEF\xBB\xBF")) fields[0].erase(0, 3);
      t.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != t.header.size()) {
      ++t.malformed;
      continue;
    }
    t.rows.push_back(std::move(fields));
    t.line_numbers.push_back(line_no);
  }
  if (!have_header) fail(ErrorKind::Schema, t.origin + ": missing header row");
  return t;
}

inline Table read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::Schema, "cannot open '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path);
}

/// 9 significant digits, locale independent.
inline std::string format(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 9);
  return std::string(buf, r.ptr);
}

inline std::string escape(std::string_view s) {
  if (s.find_first_of(",\"\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

/// Row builder: `Row() << "a" << 1.5` yields `a,1.5`.
class Row {
 public:
  Row& operator<<(std::string_view s) {
    add(escape(s));
    return *this;
  }
  Row& operator<<(const std::string& s) { return *this << std::string_view(s); }
  Row& operator<<(const char* s) { return *this << std::string_view(s); }
  Row& operator<<(double v) {
    add(format(v));
    return *this;
  }
  Row& operator<<(std::size_t v) {
    add(std::to_string(v));
    return *this;
  }
  Row& operator<<(int v) {
    add(std::to_string(v));
    return *this;
  }
  const std::string& str() const { return line_; }

 private:
  void add(const std::string& field) {
    if (!first_) line_ += ',';
    line_ += field;
    first_ = false;
  }
  std::string line_;
  bool first_ = true;
};

}  // namespace igroup::csv
