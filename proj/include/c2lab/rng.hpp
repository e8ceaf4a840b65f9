#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace c2lab {

using Rng = std::mt19937_64;

/// Seed for a named substream of a master seed. Stable across runs and platforms.
inline std::uint64_t substream_seed(std::uint64_t master, std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  std::uint64_t z = master ^ h;
  z += 0x9e3779b97f4a7c15ULL;  // splitmix64 finalizer
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Rng substream(std::uint64_t master, std::string_view name) { return Rng(substream_seed(master, name)); }

}  // namespace c2lab
