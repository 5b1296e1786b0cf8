#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <utility>

namespace balsam {

/// Deterministic random generator used by every sampling algorithm.
///
/// Wraps std::mt19937_64 but derives uniforms and bounded integers from the
/// raw 64-bit output directly, so a given seed produces the same stream on
/// every platform. Replication streams are derived from a master seed with
/// a splitmix-style hash: Rng::derive(master, r) is independent of how many
/// other streams exist, which keeps multi-threaded runs reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// Stream r of a master seed (splitmix64 of the pair).
  static Rng derive(std::uint64_t master_seed, std::uint64_t stream) {
    return Rng(mix(master_seed + 0x9E3779B97F4A7C15ULL * (stream + 1)));
  }

  /// Uniform double in [0, 1) with 53 random bits.
  double uniform() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
  }

  /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
  std::size_t uniform_below(std::size_t n) {
    if (n == 0) throw std::invalid_argument("uniform_below: n must be positive");
    const std::uint64_t bound = ~std::uint64_t{0} - (~std::uint64_t{0} % n + 1) % n;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x > bound);
    return static_cast<std::size_t>(x % n);
  }

  bool bernoulli(double p) { return uniform() < p; }

  template <class RandomIt>
  void shuffle(RandomIt first, RandomIt last) {
    const auto n = static_cast<std::size_t>(last - first);
    for (std::size_t i = n; i > 1; --i) {
      std::swap(first[i - 1], first[uniform_below(i)]);
    }
  }

  std::uint64_t raw() { return engine_(); }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
};

}  // namespace balsam
