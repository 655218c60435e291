#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace jomi {

// Counter-based splittable random streams. A stream is keyed by an arbitrary
// chain of 64-bit values (master seed, trial index, role, unit index, ...),
// so any worker can reconstruct the exact same stream regardless of
// execution order or thread count.
inline constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix64(seed ^ 0x2545f4914f6cdd1dULL)) {}

  // Derives an independent stream from this one's key chain.
  Rng fork(std::uint64_t key) const { return Rng(mix64(state_ ^ mix64(key))); }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform on [0, 1).
  double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, bound).
  std::uint64_t below(std::uint64_t bound) { return next_u64() % bound; }

  // Box-Muller; avoids the implementation-defined std::normal_distribution
  // so streams are bit-identical across standard libraries.
  double normal() {
    double u1 = u01();
    while (u1 <= 0.0) u1 = u01();
    const double u2 = u01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  double exponential() {
    double u = u01();
    while (u <= 0.0) u = u01();
    return -std::log(u);
  }

 private:
  std::uint64_t state_;
};

}  // namespace jomi
