#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>

namespace ysf {

// SplitMix64 stream. Used everywhere randomness is needed (weight init,
// synthetic data, shuffling) so results are identical across platforms;
// the standard-library distributions are implementation-defined.
struct Rng {
  uint64_t state;

  explicit Rng(uint64_t seed) : state(seed) {}

  uint64_t next_u64() {
    state += 0x9E3779B97F4A7C15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 24 bits of precision.
  float next_float() { return static_cast<float>(next_u64() >> 40) * 0x1.0p-24f; }

  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  float uniform(float lo, float hi) { return lo + (hi - lo) * next_float(); }

  // Integer in [0, n).
  uint64_t next_below(uint64_t n) { return next_u64() % n; }

  // Box-Muller; one value per call, no cached spare so the stream position
  // is a pure function of the call count.
  float normal(float mean, float sigma) {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    return mean + sigma * static_cast<float>(r * std::cos(2.0 * M_PI * u2));
  }
};

// Collapses a key tuple into a single 64-bit seed. Lets independent sample
// streams be derived from (seed, class, video, frame, ...) tuples.
inline uint64_t mix_key(std::initializer_list<uint64_t> parts) {
  uint64_t h = 0x8BADF00D5EEDull;
  for (uint64_t p : parts) {
    h ^= p + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
    Rng r(h);
    h = r.next_u64();
  }
  return h;
}

}  // namespace ysf
