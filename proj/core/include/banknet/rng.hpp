#pragma once

#include <cmath>
#include <cstdint>

namespace bnk {

/// SplitMix64. Fixed here as the project-wide generator so that seeded draws
/// are byte-reproducible across platforms: every step is pure 64-bit integer
/// arithmetic, no libm and no implementation-defined std::random machinery.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1), 53-bit resolution.
  double next_double() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi). Exact when lo == hi.
  double uniform(double lo, double hi) { return lo + next_double() * (hi - lo); }

  bool coin() { return next_double() < 0.5; }

  /// Uniform integer in [0, n). Multiply-shift bounding, n must be > 0.
  std::uint64_t next_below(std::uint64_t n) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next()) * n) >> 64);
  }

  /// Standard normal via Box-Muller.
  double normal() {
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
  }

 private:
  std::uint64_t state_;
};

/// Stream key for (seed, item, epoch/variant) triples. Feeds each component
/// through the SplitMix64 mixer so nearby indices do not collide the way a
/// plain xor would.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t item, std::uint64_t round) {
  SplitMix64 a(base);
  SplitMix64 b(a.next() ^ (item * 0x9e3779b97f4a7c15ULL + 0x632be59bd9b4e019ULL));
  SplitMix64 c(b.next() ^ (round * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
  return c.next();
}

}  // namespace bnk
