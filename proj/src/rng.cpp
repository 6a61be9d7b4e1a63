#include "splitrank/rng.hpp"

namespace splitrank::rng {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t stream_tag(std::string_view name) {
  // FNV-1a, then mixed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return splitmix64(h);
}

std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  return splitmix64(splitmix64(splitmix64(seed) ^ tag) + index);
}

std::mt19937_64 substream(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  return std::mt19937_64(substream_seed(seed, stream_tag(name), index));
}

std::uint64_t uniform_index(std::mt19937_64& gen, std::uint64_t bound) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t r = gen();
  while (r >= limit) r = gen();
  return r % bound;
}

}  // namespace splitrank::rng
