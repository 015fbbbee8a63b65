#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>

namespace remembra {

// splitmix64; used both as a small deterministic RNG and for seed derivation.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  int64_t below(int64_t n) { return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n)); }

  // Standard normal via Box-Muller (one draw per call; spare discarded to
  // keep the stream position independent of call pattern).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  uint64_t state() const { return state_; }

 private:
  uint64_t state_;
};

// Derives an independent stream from (seed, tag); FNV-1a over the tag.
inline uint64_t derive_seed(uint64_t seed, const std::string& tag) {
  uint64_t h = 1469598103934665603ULL ^ seed;
  for (const char c : tag) {
    h ^= static_cast<uint8_t>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace remembra
