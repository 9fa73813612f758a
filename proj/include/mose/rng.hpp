#pragma once

#include <cstdint>
#include <random>

namespace mose {

using Rng = std::mt19937_64;

/// Named substreams split from one run seed.
enum class Substream : std::uint64_t { data = 1, stream = 2, augment = 3, buffer = 4, init = 5, eval = 6 };

/// splitmix64 finalizer; used to decorrelate derived seeds.
constexpr std::uint64_t mix_seed(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline Rng make_rng(std::uint64_t seed, Substream which) {
  return Rng(mix_seed(mix_seed(seed) ^ static_cast<std::uint64_t>(which)));
}

}  // namespace mose
