#pragma once

#include <cstdint>

namespace accpred {

/// SplitMix64 (Steele, Lea & Flood 2014). Output n is a pure function of
/// (seed, n): state_n = seed + n * 0x9E3779B97F4A7C15, output = mix64(state_n).
/// The derived draws below are specified bit-for-bit in docs/rng.md so that
/// other implementations can reproduce every stream.
class SplitMix64 {
 public:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  std::uint64_t next() noexcept {
    state_ += kGamma;
    return mix64(state_);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept;

  /// Uniform integer in [0, n), rejection-sampled (no modulo bias). n >= 1.
  std::uint64_t below(std::uint64_t n) noexcept;

  /// Standard normal via the cosine branch of Box-Muller (two draws per value).
  double normal() noexcept;

  /// Independent child stream seeded from the next output.
  SplitMix64 split() noexcept { return SplitMix64(next()); }

  std::uint64_t state() const noexcept { return state_; }

  static std::uint64_t mix64(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t state_;
};

/// Seed of sub-stream `stream` of `seed`: mix64(seed ^ mix64(stream + kGamma)).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept;

}  // namespace accpred
