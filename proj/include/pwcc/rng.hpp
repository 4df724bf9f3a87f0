#pragma once

#include <cmath>
#include <cstdint>

#include "pwcc/errors.hpp"

namespace pwcc {

// xoshiro256++ with splitmix64 seeding. Substreams are derived from
// (seed, stream) so that block b of a sharded computation always sees the
// same variates regardless of which worker runs it.
class RngStream {
public:
  explicit RngStream(std::uint64_t seed, std::uint64_t stream = 0) {
    std::uint64_t x = mix64(seed + 0x9E3779B97F4A7C15ULL);
    x ^= mix64(stream + 0xBF58476D1CE4E5B9ULL);
    for (auto& word : s_) {
      x += 0x9E3779B97F4A7C15ULL;
      word = mix64(x);
    }
    // all-zero state is invalid for xoshiro
    if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
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

  // uniform on [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // standard normal, Box-Muller; the spare value is cached in the stream
  double next_gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log1p(-u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  // Poisson by single-uniform CDF inversion. One uniform per draw keeps
  // substreams aligned, and the quantile is monotone in `mean` at fixed
  // uniform, which gives a pathwise coupling across activity sweeps.
  // Safe for mean <= ~700 (exp(-mean) stays normal); callers guard harder.
  long long next_poisson(double mean) {
    if (mean < 0.0) throw DomainError("NegativeMean", "Poisson mean must be nonnegative");
    if (mean == 0.0) {
      (void)next_double();
      return 0;
    }
    double u = next_double();
    double p = std::exp(-mean);
    double cdf = p;
    long long k = 0;
    const long long cap =
        static_cast<long long>(mean + 60.0 * std::sqrt(mean + 1.0) + 200.0);
    while (u >= cdf && k < cap) {
      ++k;
      p *= mean / static_cast<double>(k);
      cdf += p;
    }
    return k;
  }

  static std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

private:
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4];
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace pwcc
