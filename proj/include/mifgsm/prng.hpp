#pragma once

#include <cstdint>

namespace mifgsm {

// SplitMix64 (Steele, Lea, Flood 2014). Chosen for splits because the whole
// algorithm is three constants and a few shifts, so other implementations
// can reproduce a split from its seed:
//   state += 0x9E3779B97F4A7C15
//   z = state
//   z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9
//   z = (z ^ (z >> 27)) * 0x94D049BB133111EB
//   return z ^ (z >> 31)
class SplitMix64 {
 public:
  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t next() noexcept {
    std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, bound) by plain modulo reduction. The bias is below
  // bound / 2^64 and keeps the rule trivial to port.
  constexpr std::uint64_t below(std::uint64_t bound) noexcept { return next() % bound; }

  // Uniform double in [0, 1) from the top 53 bits.
  constexpr double uniform() noexcept { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t state_;
};

}  // namespace mifgsm
