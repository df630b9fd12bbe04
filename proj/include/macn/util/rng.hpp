#pragma once

#include <cstdint>

namespace macn {

/// SplitMix64 generator. Small, fast, and identical on every platform,
/// so a run is reproducible from a single integer seed.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform double in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n). Lemire reduction, no rejection loop.
  uint32_t uniform_index(uint32_t n) {
    return static_cast<uint32_t>(
        (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Derives an independent stream from (seed, stream_id).
  static uint64_t substream(uint64_t seed, uint64_t stream_id) {
    Rng r(seed ^ (0xA02BDBF7BB3C0A7ull * (stream_id + 1)));
    return r.next_u64();
  }

 private:
  uint64_t state_;
};

}  // namespace macn
