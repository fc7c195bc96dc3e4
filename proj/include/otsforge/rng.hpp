#pragma once

#include <cmath>
#include <cstdint>

namespace otsforge {

/// Counter-based generator: output k of stream (seed, stream) is a pure
/// function of (seed, stream, k), so parallel workers that own disjoint
/// stream indices produce the same numbers regardless of scheduling.
///
/// The mixing function is the SplitMix64 finalizer applied twice. All derived
/// distributions are implemented here rather than through <random> because
/// the standard distributions are not specified bit-exactly across libraries.
class Rng {
 public:
  Rng(std::uint64_t seed, std::uint64_t stream)
      : key_(mix(mix(seed ^ 0x6a09e667f3bcc909ULL) + stream * kGolden)) {}

  /// Child stream; used to give each restart/assignment its own sequence.
  [[nodiscard]] Rng split(std::uint64_t index) const {
    Rng child(key_, index + 1);
    return child;
  }

  std::uint64_t next_u64() { return mix(mix(key_ + (counter_++) * kGolden)); }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n); n must be nonzero. Lemire's method.
  std::uint64_t below(std::uint64_t n) {
    auto m = static_cast<unsigned __int128>(next_u64()) * n;
    auto low = static_cast<std::uint64_t>(m);
    if (low < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (low < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * n;
        low = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  /// Standard normal via Box-Muller (one value per call, no caching so the
  /// stream position stays a simple function of the call count).
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  [[nodiscard]] std::uint64_t counter() const { return counter_; }

 private:
  static constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

  static constexpr std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace otsforge
