// Deterministic random number generation.
//
// std::mt19937_64 has a pinned algorithm but the standard distributions do
// not, so uniform/normal conversion is done by hand. Same seed, same stream,
// on every platform and compiler.

#pragma once

#include <cmath>
#include <cstdint>

#include "math.hpp"

namespace voxray {

inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Mix several integers into one seed (order-sensitive).
inline uint64_t hash_combine(uint64_t a, uint64_t b) {
  uint64_t s = a;
  (void)splitmix64(s);
  s ^= b + 0x9e3779b97f4a7c15ull + (s << 6) + (s >> 2);
  (void)splitmix64(s);
  return s;
}

class rng {
 public:
  explicit rng(uint64_t seed = 0) : state_(seed) {
    // warm up so that small seeds diverge immediately
    (void)splitmix64(state_);
  }

  uint64_t next_u64() { return splitmix64(state_); }

  uint32_t next_u32() { return uint32_t(next_u64() >> 32); }

  // uniform in [0, 1)
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n)
  uint64_t uniform_index(uint64_t n) { return next_u64() % n; }

  // standard normal via Box-Muller (the spare value is discarded so that the
  // stream position does not depend on call history)
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 0) u1 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * pi * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  uint64_t state_;
};

}  // namespace voxray
