#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace samwalker {

using Rng = std::mt19937_64;

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seeded stream for (seed, a, b), e.g. (run seed, epoch, user).
inline Rng stream_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return Rng(mix64(mix64(seed ^ mix64(a)) ^ (b * 0xd1b54a32d192ed03ULL)));
}

/// Uniform double in [0, 1) from the top 53 bits; identical on every platform.
template <class G>
inline double uniform01(G& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, n) by rejection; platform independent unlike
/// std::uniform_int_distribution.
template <class G>
inline std::uint64_t uniform_index(G& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t r;
  do {
    r = rng();
  } while (r >= limit);
  return r % n;
}

/// Standard normal by Box-Muller on uniform01, so initialization is portable.
template <class G>
inline double standard_normal(G& rng) {
  double u1;
  do {
    u1 = uniform01(rng);
  } while (u1 <= 0.0);
  const double u2 = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

}  // namespace samwalker
