#pragma once

#include <cstdint>
#include <random>

namespace closer {

using Rng = std::mt19937_64;

/// Derives an independent child seed from (seed, stream) with splitmix64, so
/// every consumer of randomness can own a stream that does not depend on the
/// order in which other consumers draw.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Stream ids. Fixed so that adding a consumer never perturbs existing ones.
namespace stream {
inline constexpr std::uint64_t kSplit = 1;
inline constexpr std::uint64_t kShots = 2;
inline constexpr std::uint64_t kInit = 3;
inline constexpr std::uint64_t kTrain = 4;
inline constexpr std::uint64_t kAugment = 5;
inline constexpr std::uint64_t kMine = 6;
inline constexpr std::uint64_t kData = 7;
inline constexpr std::uint64_t kClassifier = 8;
}  // namespace stream

}  // namespace closer
