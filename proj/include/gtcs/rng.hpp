#pragma once
// Counter-based 64-bit generator (splitmix64 finalizer over a keyed counter)
// with named substreams, so any single pipeline stage can be reproduced
// independently of the others.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

namespace gtcs {

enum class Stream : std::uint64_t {
  matrix = 0x6d617472,
  signal = 0x7369676e,
  mme = 0x6d6d6531,
  noise = 0x6e6f6973,
  shuffle = 0x73687566,
  lilliefors = 0x6c696c6c,
  cv = 0x63766356,
  oracle = 0x6f72636c,
};

inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Key derivation: fold extra identifiers (setting, sweep index, trial, stage)
// into a seed without sharing state between substreams.
inline std::uint64_t derive(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0,
                            std::uint64_t c = 0) {
  std::uint64_t k = mix64(seed ^ 0x517cc1b727220a95ULL);
  k = mix64(k ^ a);
  k = mix64(k ^ b);
  k = mix64(k ^ c);
  return k;
}

class Rng {
 public:
  Rng(std::uint64_t seed, Stream stream, std::uint64_t salt = 0)
      : key_(derive(seed, static_cast<std::uint64_t>(stream), salt)) {}

  explicit Rng(std::uint64_t raw_key) : key_(raw_key) {}

  std::uint64_t next_u64() { return mix64(key_ + 0x2545f4914f6cdd1dULL * ++ctr_); }

  // uniform in [0, 1)
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // uniform integer in [0, n)
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = n * ((~std::uint64_t{0}) / n);
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % n;
  }

  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double u2 = next_double();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Fisher-Yates permutation of {0, ..., n-1}.
  std::vector<int> permutation(int n) {
    std::vector<int> out(n);
    for (int i = 0; i < n; ++i) out[i] = i;
    for (int i = n - 1; i > 0; --i) {
      const int j = static_cast<int>(below(static_cast<std::uint64_t>(i) + 1));
      std::swap(out[i], out[j]);
    }
    return out;
  }

  // k distinct draws from {0, ..., n-1}.
  std::vector<int> sample_without_replacement(int n, int k) {
    std::vector<int> pool(n);
    for (int i = 0; i < n; ++i) pool[i] = i;
    for (int i = 0; i < k; ++i) {
      const int j = i + static_cast<int>(below(static_cast<std::uint64_t>(n - i)));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(k);
    return pool;
  }

 private:
  std::uint64_t key_;
  std::uint64_t ctr_ = 0;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace gtcs
