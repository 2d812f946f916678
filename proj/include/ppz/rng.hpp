#pragma once

#include <cstdint>
#include <random>

namespace ppz {

// Hierarchical seed derivation. Child streams are keyed by (parent seed, tag),
// so e.g. per-driver streams stay stable when the driver population changes
// and per-location demand draws are independent of supply draws.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag) {
  return splitmix64(parent ^ splitmix64(tag));
}

inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t tag_a,
                                 std::uint64_t tag_b) {
  return derive_seed(derive_seed(parent, tag_a), tag_b);
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

}  // namespace ppz
