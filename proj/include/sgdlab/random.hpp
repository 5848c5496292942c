#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <vector>

namespace sgdlab {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer. Stable across platforms, used for all seed derivation.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for the run at `index` of a sweep rooted at `base`. Depends only on
/// the pair, never on iteration order.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) noexcept {
  return mix64(mix64(base) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

/// Independent stream for a named purpose (data, init, batches, ...) of one run.
constexpr std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  return derive_seed(seed, 0x5ad0000000000000ULL + stream);
}

enum Stream : std::uint64_t {
  kStreamTrainData = 1,
  kStreamTestData = 2,
  kStreamInit = 3,
  kStreamBatches = 4,
  kStreamSplit = 5,
};

/// Uniform integer in [0, n) by rejection, identical on every standard library.
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  const std::uint64_t range = static_cast<std::uint64_t>(n);
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % range;
  std::uint64_t v;
  do {
    v = rng();
  } while (v >= limit);
  return static_cast<std::size_t>(v % range);
}

/// Draws `count` distinct indices from [0, n) uniformly (Floyd's algorithm).
/// The output order is the insertion order, deterministic given the rng state.
inline void sample_distinct(Rng& rng, std::size_t n, std::size_t count,
                            std::vector<std::size_t>& out) {
  if (count > n) throw std::invalid_argument("sample_distinct: count exceeds population");
  out.clear();
  if (count > 32) {
    std::vector<char> taken(n, 0);
    for (std::size_t j = n - count; j < n; ++j) {
      const std::size_t t = uniform_index(rng, j + 1);
      const std::size_t pick = taken[t] ? j : t;
      taken[pick] = 1;
      out.push_back(pick);
    }
    return;
  }
  for (std::size_t j = n - count; j < n; ++j) {
    const std::size_t t = uniform_index(rng, j + 1);
    bool seen = false;
    for (std::size_t v : out) {
      if (v == t) {
        seen = true;
        break;
      }
    }
    out.push_back(seen ? j : t);
  }
}

}  // namespace sgdlab
