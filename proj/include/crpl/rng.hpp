#pragma once

#include <cmath>
#include <cstdint>

namespace crpl {

// 64-bit avalanche (SplitMix64 step). Every seeded behaviour in the project
// is keyed through this one function so runs are reproducible bit-for-bit.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

struct RngStream {
  std::uint64_t state = 0;

  std::uint64_t next_u64() {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0,1), 53 mantissa bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + uniform() * (hi - lo); }

  // Uniform integer in [0,n). Modulo reduction; the (negligible) bias is
  // accepted in exchange for a trivially portable definition.
  std::uint64_t bounded(std::uint64_t n) { return next_u64() % n; }

  // Standard normal via Box-Muller (cosine branch only).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0,1], keeps log finite
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }
};

// Independent stream for (seed, epoch, sample, slot), derived by folding the
// fields through mix64. The last slot is the transform index inside an
// augmentation pipeline; other consumers pass one of the domain tags below.
inline RngStream derive_stream(std::uint64_t global_seed, std::uint64_t epoch,
                               std::uint64_t sample_id, std::uint64_t slot) {
  std::uint64_t h = mix64(global_seed);
  h = mix64(h ^ epoch);
  h = mix64(h ^ sample_id);
  h = mix64(h ^ slot);
  return RngStream{h};
}

// Domain tags, chosen far above any realistic transform index.
inline constexpr std::uint64_t kStreamShuffle = 0x53485546464C45ull;  // epoch shuffle
inline constexpr std::uint64_t kStreamInit = 0x494E4954ull << 8;      // weight init
inline constexpr std::uint64_t kStreamSplit = 0x53504C4954ull;        // dataset split
inline constexpr std::uint64_t kStreamSynth = 0x53594E5448ull;        // synthetic render

}  // namespace crpl
