#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace stsun {

/// Deterministic random stream. All distribution transforms are implemented
/// here rather than with std:: distributions so that identical seeds give
/// identical streams on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, n). n must be positive.
  std::int64_t uniform_int(std::int64_t n) {
    return static_cast<std::int64_t>(eng_() % static_cast<std::uint64_t>(n));
  }

  /// Standard normal via Box-Muller. Draws two uniforms per call.
  double normal() {
    double u1 = uniform();
    double u2 = uniform();
    // Guard against log(0).
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  /// Normal(0, stddev) resampled until |z| <= clip standard deviations.
  double trunc_normal(double stddev, double clip = 2.0) {
    for (;;) {
      double z = normal();
      if (std::abs(z) <= clip) return z * stddev;
    }
  }

  /// Derived stream: deterministic function of the parent state and a salt.
  Rng fork(std::uint64_t salt) {
    return Rng(next_u64() ^ (salt * 0x9e3779b97f4a7c15ULL + 0x2545f4914f6cdd1dULL));
  }

 private:
  std::mt19937_64 eng_;
};

}  // namespace stsun
