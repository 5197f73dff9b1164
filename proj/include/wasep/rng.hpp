#pragma once

#include <cmath>
#include <cstdint>
#include <limits>

namespace wasep {

/// SplitMix64 finaliser; used to expand seeds and to derive independent streams.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of stream `index` (tagged by `purpose`) under `master_seed`.
/// Replica i of an ensemble always sees the same stream regardless of scheduling.
constexpr std::uint64_t derive_seed(std::uint64_t master_seed, std::uint64_t index,
                                    std::uint64_t purpose = 0) {
  return splitmix64(splitmix64(master_seed ^ splitmix64(purpose + 0x5851f42d4c957f2dULL)) + index);
}

/// xoshiro256++ generator. Satisfies UniformRandomBitGenerator so it plugs into <random>.
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t seed) {
    std::uint64_t x = seed;
    for (auto& s : state_) {
      x += 0x9e3779b97f4a7c15ULL;
      s = splitmix64(x);
    }
  }

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

  result_type operator()() {
    const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

  /// Uniform on (0, 1].
  double uniform_positive() { return static_cast<double>(((*this)() >> 11) + 1) * 0x1.0p-53; }

  /// Uniform integer in [0, bound) by multiply-shift; bias is below bound / 2^64.
  std::uint32_t below(std::uint32_t bound) {
    const auto wide = static_cast<unsigned __int128>((*this)()) * bound;
    return static_cast<std::uint32_t>(wide >> 64);
  }

  /// Exp(1) variate.
  double exponential() { return -std::log(uniform_positive()); }

 private:
  static constexpr std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

  std::uint64_t state_[4];
};

}  // namespace wasep
