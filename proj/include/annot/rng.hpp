#ifndef ANNOT_RNG_HPP
#define ANNOT_RNG_HPP

#include <cstdint>
#include <random>
#include <vector>

namespace annot {

// All randomness in the pipeline flows through mt19937_64 plus the helpers
// below. std::uniform_int_distribution and std::shuffle are deliberately
// avoided: their algorithms are implementation-defined, and sampled ids must
// be reproducible from a recorded seed on any platform.
using Rng = std::mt19937_64;

// Unbiased draw from [0, n) via modulo rejection.
inline std::uint64_t uniform_index(Rng& rng, std::uint64_t n) {
  if (n <= 1) return 0;
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

// Fisher-Yates over the caller's vector.
template <typename T>
void deterministic_shuffle(Rng& rng, std::vector<T>& v) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::size_t j = static_cast<std::size_t>(uniform_index(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

// k distinct indices drawn uniformly from [0, n), in draw order.
// Partial Fisher-Yates; O(n) space, O(k) draws.
inline std::vector<std::size_t> sample_indices(Rng& rng, std::size_t n,
                                               std::size_t k) {
  std::vector<std::size_t> pool(n);
  for (std::size_t i = 0; i < n; ++i) pool[i] = i;
  if (k > n) k = n;
  std::vector<std::size_t> out;
  out.reserve(k);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = i + static_cast<std::size_t>(uniform_index(rng, n - i));
    std::swap(pool[i], pool[j]);
    out.push_back(pool[i]);
  }
  return out;
}

}  // namespace annot

#endif  // ANNOT_RNG_HPP
