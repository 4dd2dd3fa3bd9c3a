#pragma once

#include "gpemc/core.hpp"

#include <cstdint>
#include <random>

namespace gpemc {

using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Named streams. New components get new ids; existing ids never change.
enum class Stream : std::uint64_t {
  data = 1,
  chain = 2,
  pilot = 3,
  design = 4,
  mle = 5,
  adaptation = 6,
  proposal = 7,
};

/// Counter-based seed for (global seed, stream, index).
constexpr std::uint64_t stream_seed(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return splitmix64(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(stream))) + index);
}

inline Rng make_rng(std::uint64_t seed, Stream stream, std::uint64_t index = 0) {
  return Rng(stream_seed(seed, stream, index));
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double standard_normal(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline Vector standard_normal(Rng& rng, Index n) {
  Vector z(n);
  for (Index i = 0; i < n; ++i) z(i) = standard_normal(rng);
  return z;
}

}  // namespace gpemc
