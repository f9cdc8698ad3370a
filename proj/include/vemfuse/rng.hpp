#pragma once
// Deterministic seeded RNG with named sub-streams.
//
// Every stochastic subsystem (data shuffle, densification, tie-breaking,
// parameter init) draws from a stream forked off one master seed, so each
// subsystem is reproducible independently of the others.

#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace vemfuse {

namespace detail {
inline uint64_t splitmix64(uint64_t& state) {
  uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}
}  // namespace detail

class Rng {
 public:
  explicit Rng(uint64_t seed) : seed_(seed), state_(seed) {
    // Warm up so that small seeds do not produce correlated first draws.
    detail::splitmix64(state_);
    detail::splitmix64(state_);
  }

  uint64_t seed() const { return seed_; }

  uint64_t next_u64() { return detail::splitmix64(state_); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Unbiased uniform integer in [0, n).
  uint64_t uniform_int(uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be > 0");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  // Derive an independent stream from the *base* seed, a label and an index.
  // Forking does not consume state, so fork order never changes results.
  Rng fork(std::string_view label, uint64_t index = 0) const {
    uint64_t s = seed_;
    s ^= detail::fnv1a64(label) + 0x9e3779b97f4a7c15ULL + (s << 6) + (s >> 2);
    s ^= (index + 0x165667b19e3779f9ULL) + (s << 6) + (s >> 2);
    uint64_t st = s;
    return Rng(detail::splitmix64(st));
  }

  // Fisher-Yates shuffle driven by this stream.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = uniform_int(i);
      std::swap(v[i - 1], v[j]);
    }
  }

  // Sample an index from an (unnormalized) nonnegative weight vector.
  template <typename S>
  size_t categorical(const std::vector<S>& weights) {
    double total = 0.0;
    for (S w : weights) total += static_cast<double>(w);
    if (!(total > 0.0)) throw std::invalid_argument("categorical: weights sum to zero");
    double u = uniform() * total;
    double acc = 0.0;
    for (size_t i = 0; i < weights.size(); ++i) {
      acc += static_cast<double>(weights[i]);
      if (u < acc) return i;
    }
    return weights.size() - 1;
  }

 private:
  uint64_t seed_;
  uint64_t state_;
};

}  // namespace vemfuse
