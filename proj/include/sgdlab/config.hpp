#pragma once

// Flat key-value configuration text:
//
//   # comment
//   [section]
//   key = value
//   list = 1, 2, 4
//   temps = logspace(0.001, 0.1, 4)
//
// Keys before the first section header belong to section "".

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sgdlab {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& text, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (trim(text.substr(used)).empty()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError(where + ": expected a number, got '" + text + "'");
}

}  // namespace detail

class Config {
 public:
  static Config parse(std::istream& in, const std::string& source = "<config>") {
    Config cfg;
    cfg.source_ = source;
    std::string line, section;
    int lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      line = detail::trim(line);
      if (line.empty()) continue;
      const std::string where = source + ":" + std::to_string(lineno);
      if (line.front() == '[') {
        if (line.back() != ']') throw ConfigError(where + ": unterminated section header");
        section = detail::trim(line.substr(1, line.size() - 2));
        cfg.values_[section];
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
      const std::string key = detail::trim(line.substr(0, eq));
      if (key.empty()) throw ConfigError(where + ": empty key");
      cfg.values_[section][key] = detail::trim(line.substr(eq + 1));
    }
    return cfg;
  }

  static Config load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    return parse(in, path);
  }

  bool has(const std::string& section, const std::string& key) const {
    auto s = values_.find(section);
    return s != values_.end() && s->second.count(key) > 0;
  }

  std::string get(const std::string& section, const std::string& key) const {
    if (!has(section, key)) throw ConfigError(source_ + ": missing key [" + section + "] " + key);
    std::string v = values_.at(section).at(key);
    if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
    return v;
  }

  std::string get_or(const std::string& section, const std::string& key, const std::string& fallback) const {
    return has(section, key) ? get(section, key) : fallback;
  }

  double number(const std::string& section, const std::string& key) const {
    return detail::parse_double(get(section, key), where(section, key));
  }

  double number_or(const std::string& section, const std::string& key, double fallback) const {
    return has(section, key) ? number(section, key) : fallback;
  }

  /// Comma-separated list, optionally in brackets, or logspace(lo, hi, n).
  std::vector<double> numbers(const std::string& section, const std::string& key) const {
    std::string v = get(section, key);
    const std::string w = where(section, key);
    if (v.rfind("logspace(", 0) == 0 && v.back() == ')') {
      const auto args = split(v.substr(9, v.size() - 10));
      if (args.size() != 3) throw ConfigError(w + ": logspace takes (lo, hi, n)");
      const double lo = detail::parse_double(args[0], w), hi = detail::parse_double(args[1], w);
      const int n = static_cast<int>(detail::parse_double(args[2], w));
      if (!(lo > 0.0) || !(hi > 0.0) || n < 1) throw ConfigError(w + ": bad logspace arguments");
      std::vector<double> out;
      for (int i = 0; i < n; ++i)
        out.push_back(n == 1 ? lo : lo * std::pow(hi / lo, static_cast<double>(i) / (n - 1)));
      return out;
    }
    if (!v.empty() && v.front() == '[' && v.back() == ']') v = v.substr(1, v.size() - 2);
    std::vector<double> out;
    for (const auto& item : split(v)) out.push_back(detail::parse_double(item, w));
    if (out.empty()) throw ConfigError(w + ": empty list");
    return out;
  }

  const std::map<std::string, std::map<std::string, std::string>>& sections() const { return values_; }

 private:
  std::string where(const std::string& section, const std::string& key) const {
    return source_ + ": [" + section + "] " + key;
  }

  static std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> parts;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = detail::trim(item);
      if (!item.empty()) parts.push_back(item);
    }
    return parts;
  }

  std::string source_;
  std::map<std::string, std::map<std::string, std::string>> values_;
};

}  // namespace sgdlab
