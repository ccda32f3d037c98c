#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cvqa {

// Every random draw in a run derives from one seed through a named sub-stream
// (init, dropout, sampling, synth, ...), so each component can be reproduced
// in isolation.
inline uint64_t substream_seed(uint64_t seed, std::string_view stream) {
  // FNV-1a over the stream name, then splitmix64-style finalization.
  uint64_t h = 1469598103934665603ULL;
  for (char c : stream) {
    h ^= static_cast<uint64_t>(static_cast<unsigned char>(c));
    h *= 1099511628211ULL;
  }
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL + h;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::mt19937_64 make_rng(uint64_t seed, std::string_view stream) {
  return std::mt19937_64(substream_seed(seed, stream));
}

}  // namespace cvqa
