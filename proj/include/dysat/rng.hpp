#pragma once

#include <cstdint>
#include <random>

namespace dysat {

using RngEngine = std::mt19937_64;

/// splitmix64 finalizer; the workhorse for deriving independent seed streams.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// FNV-1a over a string literal, for naming seed streams.
constexpr std::uint64_t stream_tag(const char* s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (; *s != '\0'; ++s) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(*s));
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::uint64_t derive_seed(std::uint64_t seed) { return splitmix64(seed); }

/// Mixes any number of integer tags into a base seed. Every RNG in the
/// project is seeded through this so parallel and serial runs agree.
template <class... Rest>
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, Rest... rest) {
  return derive_seed(splitmix64(seed ^ splitmix64(tag)), rest...);
}

inline RngEngine make_rng(std::uint64_t seed) { return RngEngine(seed); }

/// Uniform in [0,1). Built directly on the engine output so sequences do not
/// depend on the standard library's distribution implementations.
inline double uniform_real(RngEngine& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(RngEngine& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform_real(rng);
}

/// Uniform integer in [0, n).
inline std::uint64_t uniform_index(RngEngine& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return x % n;
}

}  // namespace dysat
