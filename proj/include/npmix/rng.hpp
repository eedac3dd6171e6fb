#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>

namespace npmix {

// Stateless 64-bit mixer (splitmix64 finalizer). Used to derive independent
// engine seeds; never used as a generator by itself.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Deterministic random stream. The engine (mt19937_64) is fully specified by
// the standard; the variate transforms below are implemented by hand because
// std::uniform_real_distribution and std::normal_distribution are permitted
// to differ between standard library implementations, and fit results must be
// reproducible bit for bit from a seed alone.
//
// Every method consumes a documented number of raw engine draws:
//   uniform01 / uniform:  exactly 1
//   bounded:              1, plus rare unbiased rejections
//   normal:               2 on the first of each pair of calls, 0 on the second
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Stream for a derived task (worker substream, per-subject stream, named
  // proposal stream). Streams with distinct indices are statistically
  // independent for any seed.
  static Rng substream(std::uint64_t seed, std::uint64_t index) {
    return Rng(mix64(seed + index));
  }

  std::uint64_t bits() { return eng_(); }

  // Uniform on [0, 1), 53-bit resolution.
  double uniform01() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  // Uniform on [a, b); requires a <= b.
  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // Uniform integer on [0, n); unbiased via rejection. Requires n >= 1.
  std::uint64_t bounded(std::uint64_t n) {
    const std::uint64_t limit = std::uint64_t(-1) - std::uint64_t(-1) % n;
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

  // Standard normal via Box-Muller; the second variate of each pair is cached.
  double normal(double mean = 0.0, double sd = 1.0) {
    if (has_spare_) {
      has_spare_ = false;
      return mean + sd * spare_;
    }
    const double u1 = uniform01();
    const double u2 = uniform01();
    const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
    const double t = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(t);
    has_spare_ = true;
    return mean + sd * r * std::cos(t);
  }

  // Fisher-Yates shuffle, high index first.
  template <class RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    const auto n = last - first;
    for (auto i = n - 1; i > 0; --i) {
      const auto j = static_cast<decltype(i)>(bounded(static_cast<std::uint64_t>(i) + 1));
      std::swap(first[i], first[j]);
    }
  }

 private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace npmix
