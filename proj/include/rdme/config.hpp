#pragma once

#include <algorithm>
#include <fstream>
#include <istream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "rdme/errors.hpp"

namespace rdme {

// Flat key-value configuration with section headers:
//
//   # comment
//   [analysis]
//   cutoff = 0
//   [spec ols-60]
//   method = ols
//   h = 60
//
// Sections may repeat; entries keep file order. A header like
// [spec ols-60] has name "spec" and label "ols-60".
struct ConfigSection {
  std::string name;
  std::string label;
  std::vector<std::pair<std::string, std::string>> entries;

  bool has(const std::string& key) const {
    for (const auto& e : entries) {
      if (e.first == key) return true;
    }
    return false;
  }

  std::string get(const std::string& key) const {
    for (const auto& e : entries) {
      if (e.first == key) return e.second;
    }
    throw ConfigError("missing key '" + key + "' in section [" + name +
                      (label.empty() ? "" : " " + label) + "]");
  }

  std::string get_or(const std::string& key, const std::string& dflt) const {
    return has(key) ? get(key) : dflt;
  }

  double get_double(const std::string& key) const {
    const std::string v = get(key);
    try {
      std::size_t pos = 0;
      const double d = std::stod(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (...) {
      throw ConfigError("key '" + key + "': expected a number, got '" + v +
                        "'");
    }
  }

  double get_double_or(const std::string& key, double dflt) const {
    return has(key) ? get_double(key) : dflt;
  }

  long get_int(const std::string& key) const {
    const std::string v = get(key);
    try {
      std::size_t pos = 0;
      const long d = std::stol(v, &pos);
      if (pos != v.size()) throw std::invalid_argument(v);
      return d;
    } catch (...) {
      throw ConfigError("key '" + key + "': expected an integer, got '" + v +
                        "'");
    }
  }

  long get_int_or(const std::string& key, long dflt) const {
    return has(key) ? get_int(key) : dflt;
  }

  // Whitespace-separated list of numbers.
  std::vector<double> get_doubles(const std::string& key) const {
    std::istringstream ss(get(key));
    std::vector<double> out;
    double v;
    while (ss >> v) out.push_back(v);
    if (!ss.eof()) {
      throw ConfigError("key '" + key + "': expected numbers");
    }
    return out;
  }
};

struct Config {
  std::vector<ConfigSection> sections;

  const ConfigSection* find(const std::string& name) const {
    for (const auto& s : sections) {
      if (s.name == name) return &s;
    }
    return nullptr;
  }

  std::vector<const ConfigSection*> all(const std::string& name) const {
    std::vector<const ConfigSection*> out;
    for (const auto& s : sections) {
      if (s.name == name) out.push_back(&s);
    }
    return out;
  }
};

namespace detail {

inline std::string config_trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace detail

inline Config parse_config(std::istream& in) {
  Config cfg;
  cfg.sections.push_back({});  // anonymous global section
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = detail::config_trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']') {
        throw ConfigError("line " + std::to_string(line_no) +
                          ": unterminated section header");
      }
      const std::string inner = detail::config_trim(t.substr(1, t.size() - 2));
      ConfigSection sec;
      const std::size_t sp = inner.find_first_of(" \t");
      if (sp == std::string::npos) {
        sec.name = inner;
      } else {
        sec.name = inner.substr(0, sp);
        sec.label = detail::config_trim(inner.substr(sp + 1));
      }
      cfg.sections.push_back(std::move(sec));
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(line_no) +
                        ": expected key = value");
    }
    const std::string key = detail::config_trim(t.substr(0, eq));
    const std::string val = detail::config_trim(t.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    }
    cfg.sections.back().entries.emplace_back(key, val);
  }
  return cfg;
}

inline Config parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in);
}

}  // namespace rdme
