#pragma once

#include <cctype>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "clap/common.hpp"

namespace clap {

// Minimal TOML subset: [section] headers (flattened to key prefixes),
// key = value with integers, floats, booleans, quoted strings, and flat
// number arrays. Comments with #.
using TomlValue = std::variant<int64_t, double, bool, std::string, std::vector<double>>;
using TomlMap = std::map<std::string, TomlValue>;

namespace tomldetail {

inline std::string strip(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

inline TomlValue parse_scalar(const std::string& raw, const std::string& context) {
  std::string v = strip(raw);
  check(!v.empty(), "toml: empty value for ", context);
  if (v == "true") return true;
  if (v == "false") return false;
  if (v.front() == '"') {
    check(v.size() >= 2 && v.back() == '"', "toml: unterminated string for ", context);
    return v.substr(1, v.size() - 2);
  }
  bool looks_float = v.find_first_of(".eE") != std::string::npos;
  // inf/nan are not accepted; configs must stay finite
  try {
    size_t used = 0;
    if (looks_float) {
      double d = std::stod(v, &used);
      check(used == v.size(), "toml: trailing junk in value for ", context);
      return d;
    }
    int64_t i = std::stoll(v, &used, 10);
    check(used == v.size(), "toml: trailing junk in value for ", context);
    return i;
  } catch (const std::exception&) {
    fail("toml: cannot parse value '", v, "' for ", context);
  }
}

}  // namespace tomldetail

inline TomlMap parse_toml(const std::string& text) {
  TomlMap out;
  std::string section;
  size_t pos = 0;
  int line_no = 0;
  while (pos <= text.size()) {
    size_t eol = text.find('\n', pos);
    std::string line = text.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
    pos = eol == std::string::npos ? text.size() + 1 : eol + 1;
    ++line_no;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = tomldetail::strip(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      check(line.back() == ']', "toml line ", line_no, ": malformed section header");
      section = tomldetail::strip(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = line.find('=');
    check(eq != std::string::npos, "toml line ", line_no, ": expected key = value");
    std::string key = tomldetail::strip(line.substr(0, eq));
    check(!key.empty(), "toml line ", line_no, ": empty key");
    if (!section.empty()) key = section + "." + key;
    std::string value = tomldetail::strip(line.substr(eq + 1));
    if (!value.empty() && value.front() == '[') {
      check(value.back() == ']', "toml line ", line_no, ": unterminated array");
      std::vector<double> arr;
      std::string body = value.substr(1, value.size() - 2);
      size_t p = 0;
      while (p < body.size()) {
        size_t comma = body.find(',', p);
        std::string item = body.substr(p, comma == std::string::npos ? std::string::npos : comma - p);
        p = comma == std::string::npos ? body.size() : comma + 1;
        item = tomldetail::strip(item);
        if (item.empty()) continue;
        TomlValue sv = tomldetail::parse_scalar(item, "array element of " + key);
        if (std::holds_alternative<int64_t>(sv))
          arr.push_back(static_cast<double>(std::get<int64_t>(sv)));
        else if (std::holds_alternative<double>(sv))
          arr.push_back(std::get<double>(sv));
        else
          fail("toml line ", line_no, ": array elements must be numbers in ", key);
      }
      out[key] = arr;
      continue;
    }
    out[key] = tomldetail::parse_scalar(value, "key " + key + " (line " + std::to_string(line_no) + ")");
  }
  return out;
}

}  // namespace clap
