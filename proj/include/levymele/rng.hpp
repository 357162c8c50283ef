#pragma once

// Counter-based SplitMix64 generator. Every draw is a pure function of
// (key, counter), so a path's stream is fixed by (master seed, path index)
// no matter which worker thread runs it.

#include <cmath>
#include <cstdint>
#include <numbers>

namespace levymele {

inline constexpr std::uint64_t splitmix_mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(splitmix_mix(seed)) {}

  /// Independent stream `index` of master seed `seed`.
  static Rng substream(std::uint64_t seed, std::uint64_t index) {
    Rng r(0);
    r.key_ = splitmix_mix(splitmix_mix(seed) ^ splitmix_mix(index + 0x632BE59BD9B4E019ULL));
    return r;
  }

  std::uint64_t next_u64() { return splitmix_mix(key_ + (++counter_) * kGamma); }

  /// Uniform on the open interval (0, 1).
  double uniform() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double radius = std::sqrt(-2.0 * std::log(uniform()));
    const double angle = 2.0 * std::numbers::pi * uniform();
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

  double exponential(double rate) { return -std::log(uniform()) / rate; }

  /// Inverse-CDF Poisson sampling; large means are split into chunks so
  /// exp(-mean) never underflows.
  std::uint64_t poisson(double mean) {
    std::uint64_t total = 0;
    while (mean > 100.0) {
      total += poisson_small(100.0);
      mean -= 100.0;
    }
    return total + poisson_small(mean);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  std::uint64_t poisson_small(double mean) {
    if (mean <= 0.0) return 0;
    const double u = uniform();
    double term = std::exp(-mean);
    double cdf = term;
    std::uint64_t k = 0;
    while (u > cdf && k < 10000) {
      ++k;
      term *= mean / static_cast<double>(k);
      cdf += term;
      if (term == 0.0) break;
    }
    return k;
  }

  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace levymele
