#pragma once

#include <cstdint>
#include <random>

#include "layerforge/tensor.hpp"

namespace layerforge {

// Named sub-streams of a run seed. Randomness is derived counter-based from
// (seed, stream, counter), so resuming at iteration t reproduces the exact
// trajectory without serializing generator state.
enum class RngStream : std::uint64_t {
  weight_init = 1,
  data_order = 2,
  crop = 3,
  reparam = 4,
  corpus = 5,
  sampling = 6,
  heldout = 7,
};

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter);

inline std::uint64_t mix_seed(std::uint64_t seed, RngStream stream, std::uint64_t counter) {
  return mix_seed(seed, static_cast<std::uint64_t>(stream), counter);
}

// mt19937_64 with hand-rolled distributions; std::uniform_real_distribution
// and std::normal_distribution are not bit-portable across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  Rng(std::uint64_t seed, RngStream stream, std::uint64_t counter)
      : gen_(mix_seed(seed, stream, counter)) {}

  // uniform in [0, 1)
  double uniform();
  double uniform(double lo, double hi);
  // uniform integer in [0, n)
  int uniform_int(int n);
  // standard normal via Box-Muller
  double normal();

  void fill_uniform(Tensor& t, double lo, double hi);
  void fill_normal(Tensor& t);

 private:
  std::mt19937_64 gen_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace layerforge
