#pragma once

#include <cstdint>

#include "rdme/math.hpp"

namespace rdme {

// Counter-based generator: SplitMix64 finalizer applied to a keyed Weyl
// sequence. State is (key, counter), so any draw is a pure function of
// (seed, stream, counter) and parallel substreams reproduce bit-for-bit
// regardless of evaluation order.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed, std::uint64_t stream = 0)
      : key_(derive_key(seed, stream)) {}

  static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) {
    return mix(mix(seed + 0x9E3779B97F4A7C15ULL) ^
               mix(stream + 0xD1B54A32D192ED03ULL));
  }

  std::uint64_t next_u64() {
    counter_ += 0x9E3779B97F4A7C15ULL;
    return mix(key_ ^ counter_);
  }

  // Uniform on [0, 1) with 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double a, double b) { return a + (b - a) * next_double(); }

  bool bernoulli(double p) { return next_double() < p; }

  // Inverse-CDF normal draw; avoids std::normal_distribution so sequences
  // are identical across standard library implementations.
  double normal(double mean = 0.0, double sd = 1.0) {
    double u = next_double();
    if (u <= 0.0) u = 0x1.0p-53;
    return mean + sd * norm_quantile(u);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace rdme
