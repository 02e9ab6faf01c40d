#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "dcl/geom.hpp"

// Portable random streams. The engine is std::mt19937_64, whose output sequence
// the C++ standard fixes for a given seed. Distributions are sampled here rather
// than with <random>'s distribution classes, which are implementation-defined:
//   uniform: top 53 bits of one draw scaled to [0, 1)
//   normal:  Box-Muller, u1 in (0, 1], u2 in [0, 1), one draw per pair kept
// Every stream is keyed by (base seed, run index, stream id) through splitmix64.

namespace dcl::sim {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

enum class Stream : std::uint64_t {
  trajectory = 1,
  motion = 2,
  measurement = 3,
  comm = 4,
  init = 5,
};

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  Rng(std::uint64_t seed, Stream stream)
      : engine_(splitmix64(splitmix64(seed) ^ static_cast<std::uint64_t>(stream))) {}

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  double normal() {
    const double u1 = 1.0 - uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * kPi * u2);
  }

  double normal(double mean, double sigma) { return mean + sigma * normal(); }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace dcl::sim
