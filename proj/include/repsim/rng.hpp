#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>

namespace repsim {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Deterministic random stream addressed by (master_seed, stream_index).
// The same pair always reproduces the same draw sequence, no matter which
// thread or in which order the stream is consumed. All sampling is done
// from raw 64-bit words of a mt19937_64 so draws are bit-stable.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, std::uint64_t stream_index)
      : engine_(splitmix64(splitmix64(master_seed) ^ splitmix64(stream_index ^ 0xA5A5A5A5A5A5A5A5ULL))) {}

  std::uint64_t raw() { return engine_(); }

  // Uniform double in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  bool bernoulli(double prob) {
    if (prob <= 0.0) return false;
    if (prob >= 1.0) return true;
    return uniform() < prob;
  }

  // Uniform integer in [0, n).
  int uniform_int(int n) {
    if (n <= 0) throw std::invalid_argument("uniform_int: n must be positive");
    // rejection to avoid modulo bias
    const std::uint64_t span = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return static_cast<int>(v % span);
  }

  // Trial index of the first success of a Bernoulli(p) sequence, support
  // {1, 2, ...}. Inverse-CDF form so a single draw fast-forwards an entire
  // run of failed trials; distribution identical to drawing trial by trial.
  std::uint64_t geometric_trials(double p) {
    if (p <= 0.0 || p > 1.0) throw std::invalid_argument("geometric_trials: p must be in (0,1]");
    if (p == 1.0) return 1;
    const double u = uniform();
    const double k = std::floor(std::log1p(-u) / std::log1p(-p));
    return static_cast<std::uint64_t>(k) + 1;
  }

  // Poisson sample by chunked product method. Chunking keeps the per-chunk
  // mean small enough for the product method while preserving the exact
  // distribution (sums of independent Poissons are Poisson).
  std::uint64_t poisson(double mean) {
    if (mean < 0.0 || !std::isfinite(mean)) throw std::invalid_argument("poisson: bad mean");
    std::uint64_t total = 0;
    while (mean > 30.0) {
      total += poisson_small(30.0);
      mean -= 30.0;
    }
    total += poisson_small(mean);
    return total;
  }

 private:
  std::uint64_t poisson_small(double mean) {
    if (mean <= 0.0) return 0;
    const double limit = std::exp(-mean);
    std::uint64_t k = 0;
    double prod = uniform();
    while (prod > limit) {
      ++k;
      prod *= uniform();
    }
    return k;
  }

  std::mt19937_64 engine_;
};

} // namespace repsim
