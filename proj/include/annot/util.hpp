#ifndef ANNOT_UTIL_HPP
#define ANNOT_UTIL_HPP

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace annot {

// FNV-1a, 64-bit. Used for config hashes and seed derivation; stable across
// platforms and runs, unlike std::hash.
inline std::uint64_t fnv1a64(std::string_view s,
                             std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t hash_mix(std::uint64_t a, std::uint64_t b) {
  // splitmix64 finalizer over the xor; good enough for seed derivation.
  std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ULL + (a << 6) + (a >> 2));
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

inline std::string to_lower_ascii(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : s) out.push_back(static_cast<char>(std::tolower(c)));
  return out;
}

inline std::string_view trim(std::string_view s) {
  size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  size_t start = 0;
  for (size_t i = 0; i <= s.size(); ++i) {
    if (i == s.size() || s[i] == sep) {
      out.emplace_back(s.substr(start, i - start));
      start = i + 1;
    }
  }
  return out;
}

// Canonical label key: lowercase with space and hyphen runs collapsed to '_',
// so "non-evaluative", "To Be" and "to_be" all compare equal.
inline std::string label_key(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : trim(s)) {
    if (c == ' ' || c == '-') {
      if (!out.empty() && out.back() != '_') out.push_back('_');
    } else {
      out.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  while (!out.empty() && out.back() == '_') out.pop_back();
  return out;
}

}  // namespace annot

#endif  // ANNOT_UTIL_HPP
