#include "stockode/rng.hpp"

#include <cmath>
#include <numbers>

namespace stockode {

double Rng::normal() {
  // 1 - uniform() lies in (0, 1], keeping the log argument positive.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * std::numbers::pi * u2);
}

Rng Rng::fork(std::string_view label) const {
  // FNV-1a over the label, mixed with the parent seed.
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : label) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return Rng(seed_ ^ (h + 0x9E3779B97F4A7C15ULL + (seed_ << 6)));
}

Tensor Rng::normal_tensor(std::vector<std::size_t> shape) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = normal();
  return t;
}

Tensor Rng::uniform_tensor(std::vector<std::size_t> shape, double lo,
                           double hi) {
  Tensor t(std::move(shape));
  for (double& x : t.data()) x = uniform(lo, hi);
  return t;
}

}  // namespace stockode
