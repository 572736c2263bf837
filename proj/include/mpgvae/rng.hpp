#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace mpgvae {

// Seeded generator with hand-rolled output transforms. std::mt19937_64 has a
// standard-pinned sequence, but the <random> distributions do not, so the
// uniform/normal mappings are spelled out here to keep runs reproducible
// across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller without the cached spare; one normal costs two uniforms.
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    constexpr double two_pi = 6.283185307179586476925286766559;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
  }

  // Integer in [0, n); n is tiny compared to 2^64 so plain modulo is fine.
  std::uint64_t below(std::uint64_t n) { return engine_() % n; }

  // Independent stream derived from this generator's seed, e.g. one per
  // sample index. splitmix64 finalizer as the mixing function.
  Rng fork(std::uint64_t stream) const {
    std::uint64_t x = seed_ + 0x9e3779b97f4a7c15ULL * (stream + 1);
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return Rng(x ^ (x >> 31));
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

}  // namespace mpgvae
