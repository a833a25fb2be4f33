#pragma once

#include <cmath>
#include <cstdint>

namespace asdkit {

// Deterministic splitmix64 generator. Hand-rolled so that streams derived
// from (seed, index) produce identical sequences on every platform and
// under any thread schedule; std:: distributions leave their algorithms
// implementation-defined.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed)) {}

  // Independent stream for a sub-task (clip, trial, ...) of a seeded run.
  static Rng derive(std::uint64_t seed, std::uint64_t stream) {
    Rng r(seed);
    r.state_ = mix(r.state_ ^ mix(stream + 0x6A09E667F3BCC909ULL));
    return r;
  }

  static Rng derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
    return derive(mix(seed ^ mix(a)), b);
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Inclusive bounds. Modulo bias is far below anything observable at the
  // range sizes used here.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Standard normal via Box-Muller; one variate per call, no carried state.
  double normal() {
    const double u1 = 1.0 - uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Geometric number of frames with the given mean, support {1, 2, ...}.
  std::int64_t geometric(double mean) {
    if (mean <= 1.0) return 1;
    const double p = 1.0 / mean;
    const double u = uniform01();
    const std::int64_t k =
        1 + static_cast<std::int64_t>(std::floor(std::log1p(-u) / std::log1p(-p)));
    return k < 1 ? 1 : k;
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace asdkit
