#include "accpred/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>

namespace accpred {

double SplitMix64::uniform() noexcept {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

std::uint64_t SplitMix64::below(std::uint64_t n) noexcept {
  // Largest multiple of n representable in 64 bits; draws at or above it are rejected.
  const std::uint64_t rem = (std::numeric_limits<std::uint64_t>::max() % n + 1) % n;
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - rem;
  for (;;) {
    const std::uint64_t x = next();
    if (rem == 0 || x < limit + 1) return x % n;
  }
}

double SplitMix64::normal() noexcept {
  const double u1 = 1.0 - uniform();  // (0, 1]
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return SplitMix64::mix64(seed ^ SplitMix64::mix64(stream + SplitMix64::kGamma));
}

}  // namespace accpred
