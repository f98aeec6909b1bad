#pragma once

#include <cstdint>
#include <string_view>

#include "stockode/tensor.hpp"

namespace stockode {

/// Counter-based random source (splitmix64 over seed+counter). Two instances
/// with the same seed produce the same draw sequence on every platform, and
/// the (seed, counter) pair is all the state there is, so it serializes
/// trivially into checkpoints.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }
  void restore(std::uint64_t seed, std::uint64_t counter) {
    seed_ = seed;
    counter_ = counter;
  }

  std::uint64_t next_u64() {
    std::uint64_t z = seed_ + (++counter_) * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t uniform_index(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller; consumes exactly two uniform draws so
  /// the counter state alone determines the stream.
  double normal();

  /// Independent stream derived from this seed and a label; forking does not
  /// advance this instance's counter.
  Rng fork(std::string_view label) const;

  Tensor normal_tensor(std::vector<std::size_t> shape);
  Tensor uniform_tensor(std::vector<std::size_t> shape, double lo, double hi);

 private:
  std::uint64_t seed_ = 0;
  std::uint64_t counter_ = 0;
};

}  // namespace stockode
