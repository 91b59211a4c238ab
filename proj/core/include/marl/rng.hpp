#ifndef MARL_RNG_HPP_
#define MARL_RNG_HPP_

#include <cstdint>
#include <random>

namespace marl {

using Rng = std::mt19937_64;

// Independent, reproducible generator for (seed, stream). Separate streams
// keep e.g. shaper initialization from perturbing actor initialization.
inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  return Rng(seq);
}

// SplitMix64 finalizer; used to derive per-episode reset seeds.
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ULL + b + 0x632BE59BD9B4E019ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace marl

#endif  // MARL_RNG_HPP_
