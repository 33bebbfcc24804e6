#pragma once

#include <cstdint>
#include <random>

#include "semicausal/math.hpp"

namespace semicausal {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed stream for replications / folds: independent of execution order, so
// threaded runs reproduce the single-thread result exactly.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
  return splitmix64(master ^ splitmix64(index + 0x9e3779b97f4a7c15ULL));
}

// mt19937_64 with explicit output mapping. std::*_distribution is
// implementation-defined, so uniforms and normals are produced directly
// from the raw 64-bit stream to keep draws identical everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  // strictly inside (0,1)
  double uniform01() { return (static_cast<double>(gen_() >> 11) + 0.5) * 0x1.0p-53; }

  // inverse-CDF standard normal
  double normal() { return normal_quantile(uniform01()); }

  // uniform integer in [0, n), n >= 1
  std::uint64_t below(std::uint64_t n) {
    auto k = static_cast<std::uint64_t>(uniform01() * static_cast<double>(n));
    return k >= n ? n - 1 : k;
  }

 private:
  std::mt19937_64 gen_;
};

}  // namespace semicausal
