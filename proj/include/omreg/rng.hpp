#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace omreg {

/// Seedable, splittable pseudo-random generator.
///
/// Child streams are derived by hashing (seed, stream id) with SplitMix64, so
/// `Rng(s).split(i)` is a pure function of `s` and `i`. This is what lets
/// per-trajectory and per-run sampling be independent of scheduling.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t seed() const { return seed_; }
  Rng split(std::uint64_t stream) const;

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double normal();
  double gamma(double shape);
  int uniform_int(int n);
  /// Draws an index with probability proportional to weights[i].
  int categorical(std::span<const double> weights);
  /// Draws from Dirichlet(alpha, ..., alpha) of the given dimension.
  std::vector<double> dirichlet(int dim, double alpha = 1.0);

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace omreg
