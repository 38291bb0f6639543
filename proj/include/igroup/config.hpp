#pragma once

#include <charconv>
#include <concepts>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "igroup/error.hpp"

namespace igroup {

/// Plain `key = value` text configuration. Blank lines and lines starting
/// with '#' are ignored; lists are comma separated.
class KeyValueConfig {
 public:
  KeyValueConfig() = default;

  static KeyValueConfig parse(std::string_view text, std::string_view origin = "config") {
    KeyValueConfig cfg;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      const auto body = trim(line);
      if (body.empty() || body.front() == '#') continue;
      const auto eq = body.find('=');
      if (eq == std::string_view::npos) {
        fail(ErrorKind::Configuration, std::string(origin) + ":" + std::to_string(line_no) +
                                           ": expected 'key = value'");
      }
      const auto key = std::string(trim(body.substr(0, eq)));
      if (key.empty()) {
        fail(ErrorKind::Configuration, std::string(origin) + ":" + std::to_string(line_no) + ": empty key");
      }
      cfg.values_[key] = std::string(trim(body.substr(eq + 1)));
    }
    return cfg;
  }

  static KeyValueConfig load(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail(ErrorKind::Configuration, "cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return parse(buf.str(), path);
  }

  void set(const std::string& key, std::string value) { values_[key] = std::move(value); }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  /// Fails on any key outside `known`.
  void require_known(const std::set<std::string>& known) const {
    for (const auto& [k, v] : values_) {
      if (!known.count(k)) fail(ErrorKind::Configuration, "unknown config key '" + k + "'");
    }
  }

  void read(const std::string& key, double& out) const {
    if (auto it = values_.find(key); it != values_.end()) out = to_double(key, it->second);
  }

  template <std::unsigned_integral T>
  void read(const std::string& key, T& out) const {
    if (auto it = values_.find(key); it != values_.end()) out = static_cast<T>(to_unsigned(key, it->second));
  }

  void read(const std::string& key, std::vector<double>& out) const {
    if (auto it = values_.find(key); it != values_.end()) out = to_list(key, it->second);
  }

  static std::vector<double> to_list(const std::string& key, std::string_view text) {
    std::vector<double> out;
    std::size_t start = 0;
    while (start <= text.size()) {
      const auto comma = text.find(',', start);
      const auto piece = trim(text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
      if (!piece.empty()) out.push_back(to_double(key, piece));
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    return out;
  }

  static double to_double(const std::string& key, std::string_view text) {
    double v = 0.0;
    const auto t = trim(text);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size()) {
      fail(ErrorKind::Configuration, "config key '" + key + "': '" + std::string(t) + "' is not a number");
    }
    return v;
  }

  static std::uint64_t to_unsigned(const std::string& key, std::string_view text) {
    std::uint64_t v = 0;
    const auto t = trim(text);
    const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
    if (ec != std::errc() || ptr != t.data() + t.size()) {
      fail(ErrorKind::Configuration,
           "config key '" + key + "': '" + std::string(t) + "' is not a nonnegative integer");
    }
    return v;
  }

 private:
  static std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
  }

  std::map<std::string, std::string> values_;
};

}  // namespace igroup
