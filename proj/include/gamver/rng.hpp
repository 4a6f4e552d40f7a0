#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

// Deterministic random helpers. std::mt19937_64 is fully specified by the
// standard, but the std:: distributions are not; everything downstream of a
// seed goes through the mappings below so artifacts reproduce across
// toolchains.

namespace gamver {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent seed streams.
inline std::uint64_t mixSeed(std::uint64_t seed, std::uint64_t salt) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (salt + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Uniform in [0,1) with 53 random bits.
inline double uniformReal(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniformReal(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniformReal(rng);
}

// Uniform integer in [0, n) by rejection.
inline std::uint64_t uniformInt(Rng& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

// Standard normal via Box-Muller; consumes exactly two draws per call.
inline double normalReal(Rng& rng) {
  double u1 = uniformReal(rng);
  const double u2 = uniformReal(rng);
  if (u1 <= 0.0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

template <typename T>
void shuffleInPlace(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(uniformInt(rng, i));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace gamver
