#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace vitft {

/// Name recorded in reports so campaigns can be replayed.
inline constexpr const char* kRngName = "mt19937_64/splitmix64-seeded";

/// SplitMix64 finalizer; a bijective 64-bit mix.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Child seed for stream (a, b) under `base`. Independent streams are keyed
/// by counters, never by generator state.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) noexcept {
  return splitmix64(splitmix64(splitmix64(base) ^ a) ^ (b * 0xD1B54A32D192ED03ull));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

/// Unbiased draw from [0, n). `n` must be positive. Portable across standard
/// libraries, unlike std::uniform_int_distribution.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t n) {
  const std::uint64_t threshold = (0 - n) % n;
  for (;;) {
    const std::uint64_t x = rng();
    if (x >= threshold) return x % n;
  }
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform_unit(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Box-Muller normal draw (one value per call, portable).
inline double standard_normal(Rng& rng) {
  const double u1 = 1.0 - uniform_unit(rng);  // (0, 1]
  const double u2 = uniform_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace vitft
