#pragma once

/// \file
/// Seeded random streams with a fully specified output sequence.
///
/// The engine is std::mt19937_64, whose sequence is fixed by the standard.
/// Independent substreams are seeded with splitmix64(seed + (id + 1) * φ64).
/// Uniform doubles take the top 53 bits: (x >> 11) * 2^-53, in [0, 1).
/// Normals use the Box–Muller transform on (1 - u1, u2), yielding the cosine
/// variate first and the sine variate on the next call.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "tensorkernel/error.hpp"

namespace tk {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Combines values into one seed, order-sensitive.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  return splitmix64(splitmix64(splitmix64(seed) ^ a) ^ (b * 0xD1B54A32D192ED03ULL));
}

class RandomStream {
 public:
  RandomStream(std::uint64_t seed, std::uint64_t stream_id)
      : engine_(splitmix64(seed + (stream_id + 1) * 0x9E3779B97F4A7C15ULL)) {}

  std::uint64_t next_u64() { return engine_(); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0, bound), bound >= 1, without modulo bias.
  std::uint64_t uniform_index(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = engine_();
      if (r >= threshold) return r % bound;
    }
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  /// `count` distinct values from [0, population) via a partial Fisher–Yates
  /// shuffle, in draw order.
  std::vector<std::uint64_t> sample_without_replacement(std::uint64_t population, std::uint64_t count) {
    if (count > population) {
      throw InvalidArgumentError("cannot draw " + std::to_string(count) + " distinct values from " +
                                 std::to_string(population));
    }
    std::vector<std::uint64_t> pool(population);
    for (std::uint64_t i = 0; i < population; ++i) pool[i] = i;
    for (std::uint64_t i = 0; i < count; ++i) {
      const std::uint64_t j = i + uniform_index(population - i);
      std::swap(pool[i], pool[j]);
    }
    pool.resize(count);
    return pool;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace tk
