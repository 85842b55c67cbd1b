#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "amplify/common.hpp"

namespace amplify {

// Mixes (seed, salt...) into a fresh 64-bit stream seed. splitmix64 finalizer.
inline u64 mix_seed(u64 seed) {
  u64 z = seed + 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

template <typename... Salts>
u64 mix_seed(u64 seed, u64 salt, Salts... rest) {
  return mix_seed(mix_seed(seed) ^ salt, rest...);
}

// Deterministic RNG. mt19937_64 output is pinned by the standard; the
// uniform/normal transforms are ours so streams are stable across platforms
// (std::*_distribution is implementation-defined).
class Rng {
 public:
  explicit Rng(u64 seed) : engine_(seed) {}

  u64 next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  i64 below(i64 n) {
    AMPLIFY_CHECK(n > 0, "below() needs positive bound");
    return static_cast<i64>(uniform() * static_cast<double>(n));
  }

  // Standard normal via Box-Muller (no cached spare; stream stays simple).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename It>
  void shuffle(It first, It last) {
    const i64 n = static_cast<i64>(last - first);
    for (i64 i = n - 1; i > 0; --i) {
      const i64 j = below(i + 1);
      std::swap(first[i], first[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace amplify
