#pragma once

#include <cstdint>
#include <random>

namespace gentau {

/// splitmix64 finalizer; used to derive independent per-unit seeds from a
/// master seed so parallel work is deterministic regardless of scheduling.
inline std::uint64_t mix_seed(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Seed for sub-stream `index` of `master` (replicate, family, marker...).
inline std::uint64_t sub_seed(std::uint64_t master, std::uint64_t index) {
  return mix_seed(master ^ mix_seed(index));
}

inline std::mt19937_64 make_rng(std::uint64_t seed) {
  return std::mt19937_64(seed);
}

}  // namespace gentau
