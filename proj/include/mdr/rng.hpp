#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <stdexcept>

namespace mdr {

// One step of the splitmix64 sequence starting at x. Used to expand seeds
// and to mix (seed, salt) pairs into independent stream seeds.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt) {
  return splitmix64(splitmix64(seed) + salt);
}

// xoshiro256** seeded through splitmix64.
//
// The generator is pinned (rather than using <random> engines and
// distributions) so that every draw sequence is reproducible across
// platforms and standard-library versions; uniform doubles and bounded
// integers below are likewise fixed algorithms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t t = seed;
    for (auto& word : state_) {
      t += 0x9e3779b97f4a7c15ULL;
      std::uint64_t z = t;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      word = z ^ (z >> 31);
    }
    if ((state_[0] | state_[1] | state_[2] | state_[3]) == 0) {
      state_[0] = 0x9e3779b97f4a7c15ULL;
    }
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = std::rotl(state_[1] * 5, 7) * 9;
    const std::uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = std::rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, 1), 53 mantissa bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in [0, n). Unbiased via rejection of the partial top interval.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::next_below: bound must be positive");
    const std::uint64_t rem = (UINT64_MAX % n + 1) % n;  // 2^64 mod n
    std::uint64_t x = next_u64();
    while (rem != 0 && x > UINT64_MAX - rem) x = next_u64();
    return x % n;
  }

 private:
  std::array<std::uint64_t, 4> state_;
};

}  // namespace mdr
