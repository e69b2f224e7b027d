#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>

#include "hierax/rng.hpp"

namespace hierax {

/// Pseudo-random binary signal: alternates between the two levels, holding
/// each for a duration drawn uniformly from [hold_min, hold_max] samples.
/// The starting level is part of the random draw. Deterministic per seed.
inline Eigen::VectorXd generate_prbs(double lo, double hi, int length, int hold_min, int hold_max,
                                     std::uint64_t seed) {
  if (!(lo < hi)) throw std::invalid_argument("generate_prbs: lo must be below hi");
  if (length < 1) throw std::invalid_argument("generate_prbs: length < 1");
  if (hold_min < 1 || hold_max < hold_min) {
    throw std::invalid_argument("generate_prbs: bad hold range");
  }
  std::mt19937_64 rng(seed);
  bool high = (rng() & 1ull) != 0;
  const std::uint64_t span = static_cast<std::uint64_t>(hold_max - hold_min) + 1;

  Eigen::VectorXd signal(length);
  int filled = 0;
  while (filled < length) {
    const int hold = hold_min + static_cast<int>(rng() % span);
    for (int k = 0; k < hold && filled < length; ++k) signal[filled++] = high ? hi : lo;
    high = !high;
  }
  return signal;
}

}  // namespace hierax
