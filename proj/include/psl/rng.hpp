#pragma once

// Counter-based random streams. Every draw is addressed by
// (seed, purpose, a, b) plus a position counter, so a value depends only on
// its address: parallel trial execution, reordered loops or a different
// thread count can never change the realized randomness.

#include <cstdint>
#include <cmath>
#include <numbers>

namespace psl::rng {

// Purpose tags keep unrelated uses of the same seed statistically disjoint.
inline constexpr std::uint64_t kGraph = 0x6772617068ULL;
inline constexpr std::uint64_t kIndist = 0x696e64697374ULL;
inline constexpr std::uint64_t kObservation = 0x6f627365727665ULL;
inline constexpr std::uint64_t kMonteCarlo = 0x6d63ULL;
inline constexpr std::uint64_t kTrial = 0x747269616cULL;

// splitmix64 finalizer.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xbf58476d1ce4e5b9ULL;
  z ^= z >> 27;
  z *= 0x94d049bb133111ebULL;
  z ^= z >> 31;
  return z;
}

inline constexpr std::uint64_t combine(std::uint64_t h, std::uint64_t w) {
  return mix64(h ^ (w + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

inline constexpr std::uint64_t derive_trial_seed(std::uint64_t base_seed,
                                                 std::uint64_t trial) {
  return combine(combine(mix64(base_seed), kTrial), trial);
}

class Stream {
 public:
  Stream(std::uint64_t seed, std::uint64_t purpose, std::uint64_t a = 0,
         std::uint64_t b = 0)
      : state_(combine(combine(combine(mix64(seed + 0x9e3779b97f4a7c15ULL),
                                       purpose),
                               a),
                       b)) {}

  std::uint64_t next_word() {
    state_ += 0x9e3779b97f4a7c15ULL;  // splitmix64 sequence from the key
    return mix64(state_);
  }

  // Uniform on [0, 1).
  double uniform01() { return static_cast<double>(next_word() >> 11) * 0x1.0p-53; }

  // Uniform on (0, 1]; safe as a log() argument.
  double uniform_open01() {
    return static_cast<double>((next_word() >> 11) + 1) * 0x1.0p-53;
  }

  bool bernoulli(double p) { return uniform01() < p; }

  // Box-Muller transform; consumes two words per call.
  double standard_normal() {
    const double u1 = uniform_open01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // Unbiased integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    for (;;) {
      const std::uint64_t w = next_word();
      if (w < limit || limit == 0) return w % n;
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace psl::rng
