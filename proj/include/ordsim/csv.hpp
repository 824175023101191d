#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

namespace ordsim::csv {

/// Locale-independent formatting with 12 significant digits. Missing or
/// non-finite values are written as NA / Inf / -Inf.
inline std::string format_double(double x) {
  if (std::isnan(x)) return "NA";
  if (std::isinf(x)) return x > 0 ? "Inf" : "-Inf";
  if (x == 0.0) return "0";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, x, std::chars_format::general, 12);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s) {
  if (s == "NA" || s.empty()) return NAN;
  if (s == "Inf") return INFINITY;
  if (s == "-Inf") return -INFINITY;
  double v = 0.0;
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw std::invalid_argument("not a number: '" + std::string(s) + "'");
  return v;
}

template <class Int = long long>
Int parse_int(std::string_view s) {
  Int v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size())
    throw std::invalid_argument("not an integer: '" + std::string(s) + "'");
  return v;
}

/// Splits one line on `delim`. Fields are never quoted in the files this
/// project writes; surrounding whitespace and a trailing '\r' are stripped.
inline std::vector<std::string_view> split(std::string_view line, char delim = ',') {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    std::string_view field = line.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start);
    while (!field.empty() && (field.front() == ' ' || field.front() == '\t' || field.front() == '"')) field.remove_prefix(1);
    while (!field.empty() && (field.back() == ' ' || field.back() == '\t' || field.back() == '"')) field.remove_suffix(1);
    out.push_back(field);
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

/// Builds one output row.
class Row {
 public:
  Row& add(std::string_view s) {
    sep();
    line_ += s;
    return *this;
  }
  Row& add(double x) { return add(std::string_view(format_double(x))); }
  Row& add(int x) { return add(std::string_view(std::to_string(x))); }
  Row& add(long long x) { return add(std::string_view(std::to_string(x))); }
  Row& add(std::uint64_t x) { return add(std::string_view(std::to_string(x))); }
  Row& add(bool b) { return add(std::string_view(b ? "1" : "0")); }
  Row& add(const char* s) { return add(std::string_view(s)); }
  Row& add(const std::string& s) { return add(std::string_view(s)); }

  std::string str() const { return line_ + '\n'; }

 private:
  void sep() {
    if (!first_) line_ += ',';
    first_ = false;
  }
  std::string line_;
  bool first_ = true;
};

/// FNV-1a 64-bit hash, used to fingerprint run configurations.
inline std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace ordsim::csv
