#pragma once

#include <cstdint>
#include <random>
#include <limits>
#include <span>
#include <utility>

namespace rl4s {

/// The only random engine used in the project. Always passed explicitly.
using Rng = std::mt19937_64;

/// Named stages for deriving independent streams from a single seed.
enum class Stream : std::uint32_t {
  kMdp = 1,
  kDataset = 2,
  kLearner = 3,
  kHazardFit = 4,
  kQFit = 5,
  kBaselineFit = 6,
  kTest = 99,
};

/// Derives a reproducible stream from (seed, stage, index). Episode-level
/// parallelism uses the episode number as `index`.
inline Rng derive_rng(std::uint64_t seed, Stream stage, std::uint64_t index = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stage), static_cast<std::uint32_t>(index),
                    static_cast<std::uint32_t>(index >> 32)};
  return Rng(seq);
}

/// Uniform double in [0,1) using the top 53 bits. Unlike
/// std::uniform_real_distribution this is identical across standard libraries.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Index in [0,n) drawn by rejection, portable across standard libraries.
inline int uniform_index(Rng& rng, int n) {
  const auto bound = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % bound;
  std::uint64_t x = rng();
  while (x >= limit) x = rng();
  return static_cast<int>(x % bound);
}

/// Draws an index from an unnormalized-safe probability vector (assumed to
/// sum to 1). Falls back to the last positive entry on round-off.
inline int sample_categorical(Rng& rng, std::span<const double> probs) {
  const double u = uniform01(rng);
  double acc = 0.0;
  int last_positive = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    if (probs[i] <= 0.0) continue;
    last_positive = static_cast<int>(i);
    acc += probs[i];
    if (u < acc) return static_cast<int>(i);
  }
  return last_positive;
}

/// Fisher-Yates over uniform_index, so the order matches across standard
/// libraries (std::shuffle does not promise that).
template <typename T>
void portable_shuffle(std::span<T> items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const auto j = static_cast<std::size_t>(uniform_index(rng, static_cast<int>(i)));
    std::swap(items[i - 1], items[j]);
  }
}

}  // namespace rl4s
