#include "omreg/rng.hpp"

#include <cmath>

#include "omreg/errors.hpp"

namespace omreg {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

Rng Rng::split(std::uint64_t stream) const {
  return Rng(splitmix64(seed_ ^ splitmix64(stream + 0x632be59bd9b4e019ULL)));
}

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(engine_);
}

double Rng::gamma(double shape) {
  std::gamma_distribution<double> dist(shape, 1.0);
  return dist(engine_);
}

int Rng::uniform_int(int n) {
  if (n <= 0) throw InvalidArgument("uniform_int: n must be positive");
  std::uniform_int_distribution<int> dist(0, n - 1);
  return dist(engine_);
}

int Rng::categorical(std::span<const double> weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw InvalidArgument("categorical: weights sum to zero");
  double u = uniform() * total;
  int last_positive = -1;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (weights[i] <= 0.0) continue;
    last_positive = static_cast<int>(i);
    if (u < weights[i]) return last_positive;
    u -= weights[i];
  }
  return last_positive;
}

std::vector<double> Rng::dirichlet(int dim, double alpha) {
  std::vector<double> out(dim);
  double total = 0.0;
  while (!(total > 0.0)) {
    total = 0.0;
    for (auto& x : out) {
      x = gamma(alpha);
      total += x;
    }
  }
  for (auto& x : out) x /= total;
  return out;
}

}  // namespace omreg
