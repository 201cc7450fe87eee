#pragma once

#include <cstdint>
#include <random>

namespace metaopt {

// All randomness flows through mt19937_64 with hand-rolled draws, so results
// are identical across platforms and standard-library versions.
using Rng = std::mt19937_64;

inline uint64_t mix_seed(uint64_t a, uint64_t b) {
  // splitmix64 finalizer over the combined words.
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline double uniform_unit(Rng& rng) {
  // 53 random mantissa bits in [0, 1).
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_in(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_unit(rng);
}

inline int64_t uniform_index(Rng& rng, int64_t n) {
  // Rejection sampling keeps the draw exactly uniform.
  const uint64_t un = static_cast<uint64_t>(n);
  const uint64_t limit = UINT64_MAX - UINT64_MAX % un;
  uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return static_cast<int64_t>(x % un);
}

// Box-Muller; draws two words per pair of calls would complicate state, so one
// value is computed per call from two uniforms.
double normal_unit(Rng& rng);

}  // namespace metaopt
