#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedsim {

/// splitmix64 mixing step; full-period, well-distributed 64-bit mixer.
inline std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Derives a decorrelated seed from a master seed and a tag path, e.g.
/// (round, client_id). Each distinct path yields an independent stream.
inline std::uint64_t derive_seed(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
  std::uint64_t s = splitmix64(master);
  for (std::uint64_t t : path) s = splitmix64(s ^ t);
  return s;
}

/// Engine for one (master_seed, path) stream. Client streams depend only on
/// (master_seed, round, client_id), never on scheduling order; this is what
/// makes runs bit-reproducible under concurrency.
inline std::mt19937_64 substream(std::uint64_t master,
                                 std::initializer_list<std::uint64_t> path) {
  return std::mt19937_64(derive_seed(master, path));
}

// Stream lanes, kept distinct so e.g. sampling draws never perturb client
// gradient noise.
inline constexpr std::uint64_t kLaneClient = 0x11;
inline constexpr std::uint64_t kLaneSampling = 0x22;
inline constexpr std::uint64_t kLaneTrial = 0x33;

}  // namespace fedsim
