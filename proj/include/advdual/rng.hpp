#pragma once

#include <cmath>
#include <cstdint>

namespace advdual {

// Counter-based randomness. Every stream is a (key, counter) pair and every
// draw is a pure function of both, so per-example streams can be evaluated
// from any thread in any order and still produce identical bits.

inline uint64_t mix64(uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline uint64_t derive_key(uint64_t parent, uint64_t id) {
  return mix64(parent + 0x9e3779b97f4a7c15ull * (id + 1));
}

template <typename... Ids>
inline uint64_t derive_key(uint64_t parent, uint64_t id, Ids... rest) {
  return derive_key(derive_key(parent, id), rest...);
}

// Named substreams expanded from one top-level seed.
enum StreamId : uint64_t {
  kStreamInit = 0x11,
  kStreamShuffle = 0x22,
  kStreamSampler = 0x33,
  kStreamNoise = 0x44,
  kStreamData = 0x55,
};

class RngStream {
 public:
  explicit RngStream(uint64_t key) : key_(key) {}

  uint64_t next_u64() { return mix64(key_ + (++counter_) * 0x9e3779b97f4a7c15ull); }

  // uniform on [0, 1)
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform on (0, 1), symmetric about 1/2
  double next_open_unit() {
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
  }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  // unit Laplace via inverse CDF: xi = -sign(u) ln(1 - 2|u|), u ~ U(-1/2, 1/2)
  double next_laplace() {
    const double u = next_open_unit() - 0.5;
    const double mag = -std::log1p(-2.0 * std::fabs(u));  // = -ln(1 - 2|u|) >= 0
    if (u > 0.0) return mag;
    if (u < 0.0) return -mag;
    return 0.0;
  }

  // standard normal, Box-Muller cosine branch (two uniforms per draw)
  double next_normal() {
    const double u1 = next_open_unit();
    const double u2 = next_unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  // uniform integer in [0, n)
  uint64_t next_below(uint64_t n) {
    // rejection on the top multiple of n to avoid modulo bias
    const uint64_t limit = n * (UINT64_MAX / n);
    uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

 private:
  uint64_t key_;
  uint64_t counter_ = 0;
};

}  // namespace advdual
