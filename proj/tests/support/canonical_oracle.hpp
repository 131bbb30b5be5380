#pragma once

// Test-only JSON canonicalizer. Independent of dexkit::canonical_dump:
// escapes strings by hand and derives shortest round-trip digits by
// searching printf precisions, then applies the fixed-vs-scientific rule
// (shorter wins, fixed on ties; integral values get ".0").

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <string>

#include "json.hpp"

namespace oracle {

inline std::string shortest_double(double v) {
  if (v == 0.0) return std::signbit(v) ? "-0.0" : "0.0";
  char buf[64];
  int precision = 0;
  for (; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*e", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  // buf = [-]d[.ddd]e[+-]xx
  std::string s(buf);
  std::string sign;
  if (s[0] == '-') {
    sign = "-";
    s.erase(0, 1);
  }
  const auto epos = s.find('e');
  std::string mantissa = s.substr(0, epos);
  const int exponent = std::atoi(s.c_str() + epos + 1);
  std::string digits;
  for (char c : mantissa) {
    if (c != '.') digits += c;
  }
  while (digits.size() > 1 && digits.back() == '0') digits.pop_back();

  std::string scientific = digits.substr(0, 1);
  if (digits.size() > 1) scientific += "." + digits.substr(1);
  char exp_buf[16];
  std::snprintf(exp_buf, sizeof exp_buf, "e%c%02d", exponent < 0 ? '-' : '+', std::abs(exponent));
  scientific += exp_buf;

  std::string fixed;
  const int point = exponent + 1;  // digits before the decimal point
  if (point <= 0) {
    fixed = "0." + std::string(static_cast<std::size_t>(-point), '0') + digits;
  } else if (static_cast<std::size_t>(point) >= digits.size()) {
    fixed = digits + std::string(static_cast<std::size_t>(point) - digits.size(), '0');
  } else {
    fixed = digits.substr(0, static_cast<std::size_t>(point)) + "." + digits.substr(static_cast<std::size_t>(point));
  }

  std::string out = fixed.size() <= scientific.size() ? fixed : scientific;
  if (out.find('.') == std::string::npos && out.find('e') == std::string::npos) out += ".0";
  return sign + out;
}

inline std::string escape(const std::string& s) {
  std::string out = "\"";
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof buf, "\\u%04x", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  return out + "\"";
}

inline std::string canonical(const nlohmann::json& v) {
  switch (v.type()) {
    case nlohmann::json::value_t::null: return "null";
    case nlohmann::json::value_t::boolean: return v.get<bool>() ? "true" : "false";
    case nlohmann::json::value_t::number_integer: return std::to_string(v.get<long long>());
    case nlohmann::json::value_t::number_unsigned: return std::to_string(v.get<unsigned long long>());
    case nlohmann::json::value_t::number_float: return shortest_double(v.get<double>());
    case nlohmann::json::value_t::string: return escape(v.get<std::string>());
    case nlohmann::json::value_t::array: {
      std::string out = "[";
      for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + canonical(v[i]);
      return out + "]";
    }
    case nlohmann::json::value_t::object: {
      std::map<std::string, std::string> sorted;
      for (auto it = v.begin(); it != v.end(); ++it) sorted[it.key()] = canonical(it.value());
      std::string out = "{";
      bool first = true;
      for (const auto& [k, val] : sorted) {
        out += (first ? "" : ",") + escape(k) + ":" + val;
        first = false;
      }
      return out + "}";
    }
    default: return "null";
  }
}

/// Canonical text of one JSON document.
inline std::string canonical_text(const std::string& text) { return canonical(nlohmann::json::parse(text)); }

}  // namespace oracle
