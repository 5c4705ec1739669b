#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace psse {

/// Reproducible random source: std::mt19937_64 (whose output sequence the
/// standard fixes) with hand-written transforms, so draws are identical across
/// standard libraries. Child streams come from SplitMix64 mixing of the seed
/// and a stream id.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 1) : seed_(seed), engine_(mix(seed)) {}

  static std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream) {
    return mix(mix(seed) ^ mix(stream + 0x632be59bd9b4e019ULL));
  }

  Rng split(std::uint64_t stream) const { return Rng(derive(seed_, stream)); }

  std::uint64_t seed() const { return seed_; }

  std::uint64_t next() { return engine_(); }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n), rejection sampled.
  std::uint64_t index(std::uint64_t n) {
    const std::uint64_t limit = n == 0 ? 0 : (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
    std::uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

  /// Standard normal via Box-Muller; one value per call.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  /// Laplace(mean, stddev) by inverse CDF; scale b = stddev / sqrt(2).
  double laplace(double mean, double stddev) {
    const double b = stddev / std::numbers::sqrt2;
    double u = uniform() - 0.5;
    while (u == -0.5) u = uniform() - 0.5;
    const double magnitude = -b * std::log1p(-2.0 * std::abs(u));
    return u < 0.0 ? mean - magnitude : mean + magnitude;
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace psse
