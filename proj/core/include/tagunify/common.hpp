// Shared numeric primitives: stable log-sum-exp, the hard-forbidden score
// sentinel, a portable deterministic RNG, and string hashing.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace tagunify {

// Hard-forbidden score. Stands in for -inf so that sums and differences of
// forbidden scores stay finite (no NaN from inf - inf); exp(kForbidden - m)
// underflows to exactly 0 for any score m of ordinary magnitude.
inline constexpr double kForbidden = -1e30;

inline double log_sum_exp(std::span<const double> v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double log_sum_exp(const double* v, int n) {
  return log_sum_exp(std::span<const double>(v, static_cast<size_t>(n)));
}

// In-place softmax of a score row; exact row normalization (sums to 1 up to
// one final division per entry).
inline void softmax_inplace(std::span<double> v) {
  double m = v[0];
  for (double x : v) m = std::max(m, x);
  double s = 0.0;
  for (double& x : v) {
    x = std::exp(x - m);
    s += x;
  }
  for (double& x : v) x /= s;
}

// splitmix64; used to seed and to advance the portable RNG below.
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

// Deterministic RNG with stable output across platforms and standard library
// versions (std::uniform_*_distribution is implementation-defined).
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() { return splitmix64(state_); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Uniform integer in [0, n); n >= 1.
  uint64_t below(uint64_t n) {
    // Rejection sampling to avoid modulo bias.
    uint64_t threshold = (~n + 1) % n;  // 2^64 mod n
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  int range(int lo, int hi) {  // inclusive bounds
    return lo + static_cast<int>(below(static_cast<uint64_t>(hi - lo + 1)));
  }

  // Standard normal via Box-Muller.
  double gaussian() {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  uint64_t state_;
};

// FNV-1a with a seed mixed into the offset basis. Stable across runs and
// platforms; this is the hash behind feature ids and cache keys.
inline uint64_t fnv1a64(std::string_view s, uint64_t seed = 0) {
  uint64_t h = 0xCBF29CE484222325ULL ^ (seed * 0x100000001B3ULL);
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::string hex64(uint64_t v);

}  // namespace tagunify
