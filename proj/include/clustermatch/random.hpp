#pragma once

#include <cstdint>
#include <random>

namespace clustermatch {

using Rng = std::mt19937_64;

// SplitMix64 finalizer; used to derive independent substream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for substream `index` of `parent`. Independent of evaluation order,
/// so results do not depend on how work is split across threads.
constexpr std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) noexcept {
  return splitmix64(splitmix64(parent) ^ splitmix64(index + 0x632BE59BD9B4E019ULL));
}

inline Rng make_rng(std::uint64_t parent, std::uint64_t index) {
  return Rng(derive_seed(parent, index));
}

}  // namespace clustermatch
