// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace thrlab {

inline uint64_t splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Order-sensitive hash of a key path, used to derive independent substreams.
inline uint64_t mix_keys(uint64_t seed, std::initializer_list<uint64_t> keys) {
  uint64_t h = splitmix64(seed);
  for (uint64_t k : keys) h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
  return h;
}

using Rng = std::mt19937_64;

/// Independent generator for the substream named by (seed, keys...).
inline Rng substream(uint64_t seed, std::initializer_list<uint64_t> keys) {
  return Rng(mix_keys(seed, keys));
}

/// Uniform double in [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Stream tags, so that seeds for different purposes never collide.
enum class Stream : uint64_t {
  kReadoutInit = 1,
  kFeatureInit = 2,
  kDataset = 3,
  kRollout = 4,
  kEval = 5,
  kVerify = 6,
};

inline uint64_t tag(Stream s) { return static_cast<uint64_t>(s); }

}  // namespace thrlab
