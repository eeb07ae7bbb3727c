#pragma once

#include <cmath>
#include <cstdint>

namespace deconf {

// splitmix64 finalizer; used for seed mixing only.
inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

// Deterministic substream derivation: one master seed, tagged streams.
// Every consumer of randomness derives its own stream so results do not
// depend on call order elsewhere in the pipeline.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag,
                                 std::uint64_t index = 0) {
  std::uint64_t h = mix64(master + 0x9e3779b97f4a7c15ULL);
  h = mix64(h ^ (tag + 0x9e3779b97f4a7c15ULL));
  h = mix64(h ^ (index + 0x9e3779b97f4a7c15ULL));
  return h;
}

// Stream tags (arbitrary distinct constants).
namespace seed_tag {
constexpr std::uint64_t mask = 0x4d41534bULL;       // holdout mask
constexpr std::uint64_t fit_masked = 0x46495430ULL; // factor fit, masked
constexpr std::uint64_t fit_full = 0x46495431ULL;   // factor fit, full data
constexpr std::uint64_t check = 0x4348454bULL;      // predictive check
constexpr std::uint64_t post_draw = 0x504f5354ULL;  // posterior draws
constexpr std::uint64_t replicate = 0x52455031ULL;  // replicated datasets
}  // namespace seed_tag

// xoshiro256++ with hand-rolled distributions.  Standard-library
// distributions are implementation-defined, which would break the
// bit-reproducibility contract across toolchains.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    std::uint64_t sm = seed;
    for (auto& s : s_) {
      sm += 0x9e3779b97f4a7c15ULL;
      s = mix64(sm);
    }
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  // uniform on [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform_pos() {
    for (;;) {
      double u = uniform();
      if (u > 0.0) return u;
    }
  }

  // unbiased integer in [0, n)
  std::uint64_t uniform_below(std::uint64_t n) {
    const std::uint64_t threshold = (-n) % n;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  bool bernoulli(double p) { return uniform() < p; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 6.283185307179586476925287 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

  // Gamma(shape, rate) via Marsaglia-Tsang squeeze.
  double gamma(double shape, double rate) {
    if (shape < 1.0) {
      const double u = uniform_pos();
      return gamma(shape + 1.0, rate) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      const double u = uniform_pos();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v / rate;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v / rate;
    }
  }

  long poisson(double mean) {
    if (!(mean > 0.0)) return 0;
    long total = 0;
    // additivity keeps the multiplication method exact for large means
    while (mean > 30.0) {
      total += poisson_small(30.0);
      mean -= 30.0;
    }
    return total + poisson_small(mean);
  }

 private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  long poisson_small(double mean) {
    const double limit = std::exp(-mean);
    long k = 0;
    double p = 1.0;
    do {
      ++k;
      p *= uniform();
    } while (p > limit);
    return k - 1;
  }

  std::uint64_t s_[4];
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace deconf
