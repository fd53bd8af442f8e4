#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace tanda {

// Deterministic RNG chain used everywhere randomness is needed: a 64-bit seed
// is expanded by splitmix64 into a xoshiro256** state. Both algorithms are
// public and widely implemented, so any language can reproduce the streams
// bit for bit. Bounded draws use plain modulo reduction (documented, stable).

inline uint64_t splitmix64_next(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Xoshiro256ss {
 public:
  static Xoshiro256ss seeded(uint64_t seed) {
    Xoshiro256ss rng;
    uint64_t sm = seed;
    for (auto& word : rng.state_) word = splitmix64_next(sm);
    return rng;
  }

  uint64_t next() {
    const uint64_t result = rotl(state_[1] * 5, 7) * 9;
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
  }

  // Uniform in [0, bound). bound must be nonzero.
  uint64_t bounded(uint64_t bound) { return next() % bound; }

  // 53-bit uniform in [0, 1).
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  // Box-Muller, one value per call (the sine branch is discarded).
  double normal() {
    const double u1 = 1.0 - unit();  // (0, 1]
    const double u2 = unit();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Normal(0, sigma) with rejection outside +/- 2 sigma.
  double truncated_normal(double sigma) {
    double z = normal();
    while (std::abs(z) > 2.0) z = normal();
    return z * sigma;
  }

  template <class T>
  void shuffle(std::vector<T>& items) {
    for (size_t i = items.size(); i > 1; --i) {
      const size_t j = static_cast<size_t>(bounded(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::array<uint64_t, 4> state_{};
};

// First k entries of a partial Fisher-Yates pass over [0, n), unsorted.
inline std::vector<size_t> sample_without_replacement(size_t n, size_t k,
                                                      Xoshiro256ss& rng) {
  std::vector<size_t> pool(n);
  for (size_t i = 0; i < n; ++i) pool[i] = i;
  for (size_t i = 0; i < k; ++i) {
    const size_t j = i + static_cast<size_t>(rng.bounded(n - i));
    std::swap(pool[i], pool[j]);
  }
  pool.resize(k);
  return pool;
}

}  // namespace tanda
