#pragma once

#include <cstdint>
#include <random>

namespace cdi {

// splitmix64. Used wherever a stable, platform-independent hash of a seed is
// needed (dataset splits, sub-seed derivation); std::hash gives no such
// guarantee.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic RNG. The engine (mt19937_64) is pinned by the standard; the
// value mappings below are ours, so streams are reproducible across
// platforms and standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(splitmix64(seed)) {}

  // Independent stream derived from (seed, salt); stable under reordering of
  // unrelated draws.
  static Rng forked(std::uint64_t seed, std::uint64_t salt) {
    return Rng(splitmix64(seed) ^ splitmix64(salt ^ 0xa02b'dbf7'bb3c'0a7ULL));
  }

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  float uniformf() { return static_cast<float>(uniform()); }

  float uniformf(float lo, float hi) {
    return static_cast<float>(uniform(static_cast<double>(lo), static_cast<double>(hi)));
  }

  // Uniform integer in [lo, hi], inclusive.
  int uniform_int(int lo, int hi) {
    const auto span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(eng_() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace cdi
