#pragma once

#include <cstdint>
#include <initializer_list>

namespace platoon::rng {

/// SplitMix64 step; used for seed mixing only.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

/// Deterministic per-purpose random stream (xoshiro256** core).
///
/// Streams are addressed by (seed, tag...) so that every consumer in the
/// simulator owns an independent sequence; draws on one stream never affect
/// another, which keeps traces reproducible regardless of evaluation order.
class Stream {
 public:
  Stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags) {
    std::uint64_t mix = seed;
    for (std::uint64_t t : tags) {
      mix ^= t + 0x9e3779b97f4a7c15ull + (mix << 6) + (mix >> 2);
      (void)splitmix64(mix);
    }
    for (auto& word : s_) word = splitmix64(mix);
  }

  std::uint64_t next() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform double in [0, 1), 53-bit resolution.
  double canonical() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * canonical(); }

  bool bernoulli(double p) { return canonical() < p; }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }
  std::uint64_t s_[4]{};
};

}  // namespace platoon::rng
