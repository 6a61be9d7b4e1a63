#pragma once

#include <cstdint>
#include <random>
#include <utility>
#include <string_view>

namespace splitrank::rng {

std::uint64_t splitmix64(std::uint64_t x);

/// Stable 64-bit tag for a stream name, so adding streams never shifts
/// existing ones.
std::uint64_t stream_tag(std::string_view name);

/// Seed for the substream (seed, tag, index). Distinct triples give
/// statistically independent generators; the mapping is fixed across
/// platforms.
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0);

/// Generator for substream (seed, name, index).
std::mt19937_64 substream(std::uint64_t seed, std::string_view name, std::uint64_t index = 0);

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

/// Uniform integer in [0, bound) by rejection; bound > 0.
std::uint64_t uniform_index(std::mt19937_64& gen, std::uint64_t bound);

/// Fisher-Yates with uniform_index, so the permutation is the same on every
/// standard library.
template <typename It>
void shuffle(It first, It last, std::mt19937_64& gen) {
  const auto n = static_cast<std::uint64_t>(last - first);
  for (std::uint64_t i = n; i > 1; --i) {
    const auto j = uniform_index(gen, i);
    std::swap(first[i - 1], first[j]);
  }
}

}  // namespace splitrank::rng
