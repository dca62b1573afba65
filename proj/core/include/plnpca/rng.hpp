#pragma once

#include <cstdint>
#include <random>

namespace plnpca::rng {

/// splitmix64 finalizer; decorrelates nearby integer labels.
constexpr std::uint64_t mix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Deterministic child stream keyed by up to three labels (iteration,
/// individual, purpose). Streams are independent of evaluation order, so
/// per-individual work can run in parallel without changing results.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = mix(seed ^ mix(a ^ mix(b ^ mix(c))));
  return std::mt19937_64(s);
}

}  // namespace plnpca::rng
