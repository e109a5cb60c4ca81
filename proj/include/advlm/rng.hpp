#ifndef ADVLM_RNG_HPP_
#define ADVLM_RNG_HPP_

#include <cstdint>
#include <limits>

namespace advlm {

/// SplitMix64 (Steele, Lea & Flood 2014). Every seeded draw in the toolkit
/// goes through this generator so that toy weights, random starts and
/// dataset subsets are identical across platforms and across the Python
/// oracle scripts under tests/oracles/.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t operator()() { return next(); }
  static constexpr std::uint64_t min() { return 0; }
  static constexpr std::uint64_t max() { return std::numeric_limits<std::uint64_t>::max(); }

  // Top 53 bits scaled into [0, 1).
  double uniform01() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, bound) by rejection of the short first interval.
  std::uint64_t bounded(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      const std::uint64_t r = next();
      if (r >= threshold) return r % bound;
    }
  }

 private:
  std::uint64_t state_;
};

// Derives an independent stream seed from a base seed and an index.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t index) {
  SplitMix64 g(base ^ (index * 0xD1B54A32D192ED03ULL));
  return g.next();
}

}  // namespace advlm

#endif  // ADVLM_RNG_HPP_
