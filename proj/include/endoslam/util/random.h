#pragma once

#include <cstdint>
#include <random>

namespace endoslam {

// Platform-independent random numbers. std::mt19937_64 output is fully
// specified by the standard, the <random> distributions are not, so the
// conversions below are done by hand.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n).
  std::uint64_t index(std::uint64_t n) {
    return static_cast<std::uint64_t>(uniform() * static_cast<double>(n)) % n;
  }

  // Box-Muller; one value per call keeps the stream layout simple.
  double normal(double mean = 0.0, double stddev = 1.0);

 private:
  std::mt19937_64 engine_;
};

// Stateless hash usable as a seeded noise source.
inline std::uint64_t mix64(std::uint64_t x) {
  x ^= x >> 30;
  x *= 0xbf58476d1ce4e5b9ULL;
  x ^= x >> 27;
  x *= 0x94d049bb133111ebULL;
  x ^= x >> 31;
  return x;
}

inline double hash_unit(std::uint64_t seed, std::int64_t a, std::int64_t b,
                        std::int64_t c = 0) {
  std::uint64_t h = mix64(seed ^ mix64(static_cast<std::uint64_t>(a) +
                                       0x9e3779b97f4a7c15ULL));
  h = mix64(h ^ static_cast<std::uint64_t>(b));
  h = mix64(h ^ static_cast<std::uint64_t>(c));
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

}  // namespace endoslam
