#pragma once

// Canonical JSON rendering shared by every file and wire format in dexkit:
// object keys in byte-lexicographic order, no insignificant whitespace,
// floating-point numbers in their shortest round-trip decimal form.

#include <charconv>
#include <cmath>
#include <fstream>
#include <string>
#include <string_view>
#include <system_error>

#include "json.hpp"

#include "dexkit/error.hpp"

namespace dexkit {

using Json = nlohmann::json;

/// Shortest round-trip decimal form of a finite double: the shortest digit
/// string that parses back to exactly `value`, written in fixed notation
/// unless scientific notation is strictly shorter. Integral results keep a
/// trailing ".0" so they stay floating-point on reparse.
inline std::string format_double(double value) {
  if (!std::isfinite(value)) return "null";
  if (value == 0.0) return std::signbit(value) ? "-0.0" : "0.0";

  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value, std::chars_format::scientific);
  std::string_view sci(buf, static_cast<std::size_t>(end - buf));

  std::string sign;
  if (sci.front() == '-') {
    sign = "-";
    sci.remove_prefix(1);
  }
  const auto epos = sci.find('e');
  std::string digits;
  for (char c : sci.substr(0, epos)) {
    if (c != '.') digits += c;
  }
  int exponent = 0;
  std::from_chars(sci.data() + epos + (sci[epos + 1] == '+' ? 2 : 1), sci.data() + sci.size(), exponent);

  std::string scientific(sci);
  std::string fixed;
  const int point = exponent + 1;
  if (point <= 0) {
    fixed = "0." + std::string(static_cast<std::size_t>(-point), '0') + digits;
  } else if (static_cast<std::size_t>(point) >= digits.size()) {
    fixed = digits + std::string(static_cast<std::size_t>(point) - digits.size(), '0');
  } else {
    fixed = digits.substr(0, static_cast<std::size_t>(point)) + "." + digits.substr(static_cast<std::size_t>(point));
  }
  std::string out = fixed.size() <= scientific.size() ? fixed : scientific;
  if (out.find_first_of(".e") == std::string::npos) out += ".0";
  return sign + out;
}

namespace detail {

inline void append_string(std::string& out, std::string_view s) {
  // nlohmann's string escaper: \" \\ \b \f \n \r \t, other controls as \u00XX
  try {
    out += Json(std::string(s)).dump();
  } catch (const Json::type_error& e) {
    throw Error(ErrorCode::MalformedJson, e.what());
  }
}

inline void append_canonical(std::string& out, const Json& value) {
  switch (value.type()) {
    case Json::value_t::null:
    case Json::value_t::discarded:
      out += "null";
      break;
    case Json::value_t::boolean:
      out += value.get<bool>() ? "true" : "false";
      break;
    case Json::value_t::number_integer:
      out += std::to_string(value.get<std::int64_t>());
      break;
    case Json::value_t::number_unsigned:
      out += std::to_string(value.get<std::uint64_t>());
      break;
    case Json::value_t::number_float:
      out += format_double(value.get<double>());
      break;
    case Json::value_t::string:
      append_string(out, value.get_ref<const std::string&>());
      break;
    case Json::value_t::binary:
      throw Error(ErrorCode::MalformedJson, "binary values have no canonical JSON form");
    case Json::value_t::array: {
      out += '[';
      bool first = true;
      for (const auto& item : value) {
        if (!first) out += ',';
        first = false;
        append_canonical(out, item);
      }
      out += ']';
      break;
    }
    case Json::value_t::object: {
      // std::map storage already iterates keys in byte order
      out += '{';
      bool first = true;
      for (const auto& [key, item] : value.items()) {
        if (!first) out += ',';
        first = false;
        append_string(out, key);
        out += ':';
        append_canonical(out, item);
      }
      out += '}';
      break;
    }
  }
}

}  // namespace detail

inline std::string canonical_dump(const Json& value) {
  std::string out;
  detail::append_canonical(out, value);
  return out;
}

/// Parses text as JSON, throwing MalformedJson with the parser's message.
inline Json parse_json(std::string_view text) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::MalformedJson, e.what());
  }
}

inline Json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::MalformedJson, path + ": " + e.what());
  }
}

/// Writes canonical JSON plus a trailing newline.
inline void write_canonical_file(const std::string& path, const Json& value) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << canonical_dump(value) << '\n';
  if (!out) throw Error(ErrorCode::Io, "short write to " + path);
}

}  // namespace dexkit
