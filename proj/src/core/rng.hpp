#pragma once

#include <cstdint>
#include <random>

namespace cosub {

using Rng = std::mt19937_64;

// SplitMix64 finalizer. Used to derive independent per-unit seeds from a
// master seed so results do not depend on scheduling order.
inline std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return mix_seed(mix_seed(master) ^ (index * 0xd1b54a32d192ed03ULL + 1));
}

// Named streams so that e.g. covariates and noise never share draws.
enum class Stream : std::uint64_t {
  Covariates = 1,
  Treatment = 2,
  Noise = 3,
  Split = 4,
  Nuisance = 5,
  Surrogate = 6,
  Restart = 7,
  Bootstrap = 8,
  Folds = 9,
  Instance = 10,
};

inline std::uint64_t derive_seed(std::uint64_t master, Stream stream, std::uint64_t index = 0) {
  return derive_seed(derive_seed(master, static_cast<std::uint64_t>(stream) << 32), index);
}

}  // namespace cosub
