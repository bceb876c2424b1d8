#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace sandlab {

// splitmix64 (Steele/Lea/Flood). Used both as a stream-seed mixer and as the
// per-walk engine: one 64-bit state per stream keeps seeding cheap enough to
// give every Monte Carlo walk its own stream.
struct SplitMix64 {
  using result_type = std::uint64_t;
  std::uint64_t state;

  explicit SplitMix64(std::uint64_t seed) : state(seed) {}

  static constexpr result_type min() { return 0; }
  static constexpr result_type max() { return ~std::uint64_t{0}; }

  result_type operator()() {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }
};

inline std::uint64_t mix64(std::uint64_t a, std::uint64_t b) {
  SplitMix64 g(a ^ (0x9e3779b97f4a7c15ull + (b << 6) + (b >> 2)));
  g();
  return g() ^ b;
}

/// FNV-1a over bytes; stable task-path hashing for seed derivation and manifests.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

/// Convenience wrapper with the draw primitives the walkers need.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t bits() { return gen_(); }

  /// Uniform double in [0,1).
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  /// Uniform integer in [0,n), n >= 1. Lemire mul-shift, no rejection bias at our scales.
  int uniform_int(int n) {
    const std::uint64_t x = gen_();
    return static_cast<int>((static_cast<unsigned __int128>(x) * static_cast<std::uint64_t>(n)) >> 64);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Exponential holding time with the given rate.
  double exponential(double rate) {
    double u;
    do { u = uniform(); } while (u <= 0.0);
    return -std::log1p(-u) / rate;
  }

 private:
  SplitMix64 gen_;
};

/// Per-task stream: (master seed, task path hash, item index) -> independent engine.
inline Rng stream_rng(std::uint64_t master_seed, std::uint64_t task_hash, std::uint64_t index) {
  return Rng(mix64(mix64(master_seed, task_hash), index));
}

}  // namespace sandlab
