#include "layerforge/rng.hpp"

#include <cmath>

namespace layerforge {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  std::uint64_t h = splitmix64(seed);
  h = splitmix64(h ^ (0x9E3779B97F4A7C15ull * (stream + 1)));
  h = splitmix64(h ^ (0xBF58476D1CE4E5B9ull * (counter + 1)));
  return h;
}

double Rng::uniform() {
  // 53 high bits -> [0, 1)
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int Rng::uniform_int(int n) {
  if (n <= 0) throw ConfigError("uniform_int: n must be positive");
  int v = static_cast<int>(uniform() * static_cast<double>(n));
  return v < n ? v : n - 1;
}

double Rng::normal() {
  if (have_spare_) {
    have_spare_ = false;
    return spare_;
  }
  double u1 = 0.0;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double a = 2.0 * 3.14159265358979323846 * u2;
  spare_ = r * std::sin(a);
  have_spare_ = true;
  return r * std::cos(a);
}

void Rng::fill_uniform(Tensor& t, double lo, double hi) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<real>(uniform(lo, hi));
}

void Rng::fill_normal(Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<real>(normal());
}

}  // namespace layerforge
