#pragma once

// Locale-independent number formatting and small text parsers shared by the
// config, truth and CSV formats.

#include <charconv>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "gnssrx/error.hpp"

namespace gnssrx::io {

/// Shortest text that parses back to exactly the same double.
inline std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

inline double parse_number(std::string_view text, std::string_view what) {
  const auto s = trim(text);
  double v = 0.0;
  const char* begin = s.data();
  if (!s.empty() && s.front() == '+') ++begin;
  const auto r = std::from_chars(begin, s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw FormatError("invalid number '" + std::string(s) + "' for " + std::string(what));
  return v;
}

template <class I>
I parse_integer(std::string_view text, std::string_view what) {
  const auto s = trim(text);
  I v{};
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || r.ec != std::errc{} || r.ptr != s.data() + s.size())
    throw FormatError("invalid integer '" + std::string(s) + "' for " + std::string(what));
  return v;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

/// "1,2,4" → {1, 2, 4}; also accepts ranges such as "1-8".
template <class I>
std::vector<I> parse_integer_list(std::string_view text, std::string_view what) {
  std::vector<I> out;
  for (auto item : split(trim(text), ',')) {
    item = trim(item);
    const auto dash = item.find('-', 1);
    if (dash != std::string_view::npos) {
      const I lo = parse_integer<I>(item.substr(0, dash), what);
      const I hi = parse_integer<I>(item.substr(dash + 1), what);
      if (hi < lo) throw FormatError("empty range '" + std::string(item) + "' for " + std::string(what));
      for (I v = lo; v <= hi; ++v) out.push_back(v);
    } else {
      out.push_back(parse_integer<I>(item, what));
    }
  }
  return out;
}

struct KeyValue {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// key = value lines; '#' starts a comment; blank lines are skipped.
/// Repeated keys are rejected.
inline std::vector<KeyValue> parse_key_values(std::string_view text) {
  std::vector<KeyValue> out;
  std::set<std::string, std::less<>> seen;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw FormatError("line " + std::to_string(line_no) + ": expected key = value");
    const auto key = std::string(trim(line.substr(0, eq)));
    if (key.empty()) throw FormatError("line " + std::to_string(line_no) + ": empty key");
    if (!seen.insert(key).second) throw FormatError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
    out.push_back({key, std::string(trim(line.substr(eq + 1))), line_no});
  }
  return out;
}

}  // namespace gnssrx::io
