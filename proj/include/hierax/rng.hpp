#pragma once

#include <cstdint>
#include <random>

namespace hierax {

/// Uniform double in [0,1) built from the top 53 bits of the generator
/// output, so every platform with a conforming mt19937_64 produces the same
/// sequence.
inline double unit_uniform(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_in(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * unit_uniform(rng);
}

/// Deterministic per-stream seed derivation (splitmix64 of base xor stream),
/// so one scenario seed can fan out to independent signal channels.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace hierax
