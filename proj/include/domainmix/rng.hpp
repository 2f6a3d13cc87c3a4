#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <utility>
#include <vector>

namespace domainmix {

// Counter-based splittable PRNG (SplitMix64 finalizer over key + counter).
// Every random draw in the project descends from one root seed through
// named splits, so whole runs replay bit-for-bit.
class Rng {
 public:
  explicit Rng(uint64_t seed) : key_(finalize(seed ^ kPhi)) {}

  // Independent child stream. Children of distinct tags never overlap.
  Rng split(uint64_t tag) const { return Rng(key_ ^ finalize(tag * kPhi + 0x1d8af4f3b4d011c9ULL)); }
  Rng split(std::string_view tag) const { return split(fnv1a(tag)); }

  uint64_t next_u64() { return finalize(key_ + (++counter_) * kPhi); }

  // Uniform in [0, 1), 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Unbiased integer in [0, n). n must be > 0.
  uint64_t uniform_int(uint64_t n) {
    const uint64_t limit = n * (UINT64_MAX / n);
    uint64_t r;
    do {
      r = next_u64();
    } while (r >= limit);
    return r % n;
  }

  // Standard normal via Box-Muller (cosine branch only; no cached spare).
  double normal() {
    const double u = 1.0 - uniform();  // (0, 1]
    const double v = uniform();
    return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * kPi * v);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(uniform_int(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  static uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : s) {
      h ^= static_cast<uint8_t>(c);
      h *= 0x100000001b3ULL;
    }
    return h;
  }

 private:
  static constexpr uint64_t kPhi = 0x9e3779b97f4a7c15ULL;
  static constexpr double kPi = 3.141592653589793238462643383279502884;

  static uint64_t finalize(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  uint64_t key_ = 0;
  uint64_t counter_ = 0;
};

}  // namespace domainmix
