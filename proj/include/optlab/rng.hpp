#pragma once

#include <cmath>
#include <cstdint>

namespace optlab {

// Counter-based splittable PRNG.
//
// Draw i of a stream is a pure function of (key, i):
//
//   output(i) = mix64(key + i * GAMMA)
//
// where GAMMA = 0x9E3779B97F4A7C15 (the 64-bit golden ratio) and mix64 is
// the SplitMix64 finalizer (Steele, Lea & Flood, "Fast splittable
// pseudorandom number generators", OOPSLA 2014):
//
//   z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9;
//   z ^= z >> 27;  z *= 0x94D049BB133111EB;
//   z ^= z >> 31;
//
// The key of a stream is mix64(seed ^ GAMMA); substream j of a stream has
// key mix64(key ^ mix64((j + 1) * GAMMA)).  Because draws depend only on the
// key and a counter, a dataset generated trajectory-by-trajectory is
// identical whether trajectories are produced serially or in parallel, and
// extending a run appends trajectories without disturbing earlier ones.
//
// Derived values:
//   uniform01: top 53 bits of a draw scaled by 2^-53, in [0, 1).
//   normal:    Box-Muller on two consecutive draws (no cached spare, so one
//              normal always consumes exactly two raw draws).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : key_(mix64(seed ^ kGamma)) {}

  std::uint64_t next_u64() { return mix64(key_ + (++counter_) * kGamma); }

  // Independent stream derived from this stream's key; unaffected by and not
  // affecting the parent's counter.
  Rng substream(std::uint64_t index) const {
    Rng child(0);
    child.key_ = mix64(key_ ^ mix64((index + 1) * kGamma));
    child.counter_ = 0;
    return child;
  }

  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double a, double b) { return a + (b - a) * uniform01(); }

  // Unbiased integer in [0, bound) via 128-bit multiply-shift.
  std::uint64_t uniform_int(std::uint64_t bound) {
    return static_cast<std::uint64_t>(
        (static_cast<unsigned __int128>(next_u64()) * bound) >> 64);
  }

  double normal() {
    // u1 in (0, 1] so the log is finite.
    double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::uint64_t key() const { return key_; }

  static std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

 private:
  static constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ULL;

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace optlab
