#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace arcade {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// FNV-1a of the stream name
inline std::uint64_t stream_tag(std::string_view name) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

// seed for path `index` of stream `name`: splitmix64(splitmix64(seed ^ tag(name)) ^ index)
inline std::uint64_t stream_seed(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  return splitmix64(splitmix64(seed ^ stream_tag(name)) ^ index);
}

using Rng = std::mt19937_64;

inline Rng make_stream(std::uint64_t seed, std::string_view name, std::uint64_t index) {
  return Rng(stream_seed(seed, name, index));
}

}  // namespace arcade
