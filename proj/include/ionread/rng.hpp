#pragma once

#include <cstdint>
#include <random>

namespace ionread::rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed of the idx-th substream of a master seed. Substreams are independent
/// of generation order, so per-frame / per-restart work can run in parallel
/// and still reproduce exactly.
inline std::uint64_t substream(std::uint64_t master, std::uint64_t idx) {
  return splitmix64(master ^ splitmix64(idx ^ 0x517cc1b727220a95ULL));
}

inline std::mt19937_64 engine(std::uint64_t seed) {
  return std::mt19937_64{splitmix64(seed)};
}

}  // namespace ionread::rng
