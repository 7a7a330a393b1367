#pragma once

#include <cstdint>
#include <string_view>

#include "dppsumm/errors.hpp"
#include "dppsumm/util.hpp"

namespace dppsumm {

// SplitMix64: 64-bit state advanced by a Weyl increment, output mixed with
// the murmur-style finalizer (Steele, Lea & Flood 2014). Chosen because its
// trivial state makes runs reproducible across platforms and its split
// operation gives independent per-task streams from one root seed.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1): top 53 bits fill a double mantissa exactly.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform in {0, ..., n-1} by rejection, so every index is equally likely.
  std::uint64_t next_index(std::uint64_t n) {
    if (n == 0) throw NumericError("next_index: n must be positive");
    std::uint64_t limit = ~0ull - (~0ull % n + 1) % n;
    std::uint64_t v;
    do {
      v = next_u64();
    } while (v > limit);
    return v % n;
  }

  bool next_bernoulli(double p) { return next_double() < p; }

  // Derives an independent stream named by `label`. Mixing the label hash
  // through the finalizer decorrelates child streams from the parent and
  // from each other; the parent is not advanced.
  SplitMix64 split(std::string_view label) const {
    std::uint64_t z = state_ ^ fnv1a64(label);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return SplitMix64(z ^ (z >> 31));
  }

  std::uint64_t state() const { return state_; }

 private:
  std::uint64_t state_;
};

}  // namespace dppsumm
