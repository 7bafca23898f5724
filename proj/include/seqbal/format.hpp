#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <string_view>

namespace seqbal {

/// Shortest round-trip decimal rendering; byte-stable for identical doubles.
inline std::string format_double(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

/// FNV-1a, used to derive stable per-model seeds from names.
inline std::uint64_t stable_hash(std::string_view s, std::uint64_t seed = 0) {
  std::uint64_t h = 1469598103934665603ULL ^ seed;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace seqbal
