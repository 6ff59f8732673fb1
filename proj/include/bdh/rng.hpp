#pragma once

#include <cstdint>
#include <string_view>

namespace bdh {

/*
 * Counter-based pseudo-random generator (splitmix64 core).
 *
 * Everything downstream (parameter init, scene textures, shuffling) draws
 * from this so that a fixed seed yields a bit-identical stream on every
 * platform: the state transition is pure 64-bit integer arithmetic and the
 * float conversion is an exact power-of-two scaling.
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1), 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Unbiased integer in [0, n) via rejection.
  std::uint64_t uniform_below(std::uint64_t n) {
    if (n == 0) return 0;
    const std::uint64_t limit = n * (~0ull / n);
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  // Independent child stream; splitting does not disturb this generator.
  Rng child(std::uint64_t stream) const {
    Rng mixer(state_ ^ (stream * 0xD6E8FEB86659FD93ull));
    return Rng(mixer.next_u64());
  }

  Rng child(std::string_view label) const {
    std::uint64_t h = 0xCBF29CE484222325ull;  // FNV-1a
    for (char c : label) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001B3ull;
    }
    return child(h);
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace bdh
