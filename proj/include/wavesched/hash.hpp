#pragma once

// Counter-based deterministic pseudo-randomness.
//
// Every stochastic choice in the library is a pure function of
// (seed, tag, a, b). The exact construction is part of the external denoiser
// protocol (see docs/protocol.md) so that adapters written in other languages
// can reproduce the uniform denoiser bit-exactly.

#include <cstdint>

namespace wavesched::hashing {

enum class Tag : std::uint64_t {
  Score = 1,
  Token = 2,
  Corrupt = 3,
  Noise = 4,
  Prediction = 5,
  SegmentLength = 6,
  TaskToken = 7,
};

inline constexpr std::uint64_t kSeedOffset = 0x9E3779B97F4A7C15ULL;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x ^= x >> 30;
  x *= 0xBF58476D1CE4E5B9ULL;
  x ^= x >> 27;
  x *= 0x94D049BB133111EBULL;
  x ^= x >> 31;
  return x;
}

constexpr std::uint64_t hash(std::int64_t seed, Tag tag, std::uint64_t a,
                             std::uint64_t b) noexcept {
  std::uint64_t h = mix64(static_cast<std::uint64_t>(seed) ^ kSeedOffset);
  h = mix64(h ^ static_cast<std::uint64_t>(tag));
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  return h;
}

/// Top 53 bits mapped to [0, 1).
constexpr double unit(std::uint64_t h) noexcept {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

constexpr double uniform01(std::int64_t seed, Tag tag, std::uint64_t a,
                           std::uint64_t b) noexcept {
  return unit(hash(seed, tag, a, b));
}

/// Pseudo-uniform in [-1, 1).
constexpr double uniform_signed(std::int64_t seed, Tag tag, std::uint64_t a,
                                std::uint64_t b) noexcept {
  return 2.0 * uniform01(seed, tag, a, b) - 1.0;
}

}  // namespace wavesched::hashing
