#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace panelreg {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer applied to `seed` combined with `stream`. Used to
/// derive independent child seeds (per tree, per iteration, per stage) so that
/// results never depend on scheduling order.
constexpr std::uint64_t mix64(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// 64-bit FNV-1a.
constexpr std::uint64_t fnv1a(std::string_view text, std::uint64_t hash = 0xCBF29CE484222325ULL) {
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001B3ULL;
  }
  return hash;
}

}  // namespace panelreg
