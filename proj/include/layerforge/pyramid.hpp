#pragma once

#include <array>
#include <vector>

#include "layerforge/graph.hpp"
#include "layerforge/tensor.hpp"

namespace layerforge::pyramid {

// 5-tap binomial by default; alternates are injectable for testing.
struct Options {
  std::array<double, 5> taps{1.0 / 16, 4.0 / 16, 6.0 / 16, 4.0 / 16, 1.0 / 16};
};

// levels[0..L-2] are band-pass at full..coarser resolution, levels[L-1] is the
// low-pass residual. Reconstruction is exact by construction:
//   down(x) = decimate2(blur(x)),  up(x) = 4 * blur(zero_upsample2(x))
//   level_l = x_l - up(down(x_l)),  x_{l+1} = down(x_l)
struct LaplacianPyramid {
  std::vector<Tensor> levels;
  int depth() const { return static_cast<int>(levels.size()); }
};

// Spatial extents must be divisible by 2^(levels-1).
LaplacianPyramid build_pyramid(const Tensor& image, int levels, const Options& opt = {});
Tensor reconstruct(const LaplacianPyramid& pyr, const Options& opt = {});

Tensor downsample(const Tensor& x, const Options& opt = {});
Tensor upsample(const Tensor& x, int out_h, int out_w, const Options& opt = {});

// Nearest-neighbor enlargement of a code field; target must not shrink it.
Tensor upsample_field(const Tensor& field, int out_h, int out_w);

// Differentiable forms over tape nodes.
std::vector<Var> build_pyramid(Var image, int levels, const Options& opt = {});
Var reconstruct(const std::vector<Var>& levels, const Options& opt = {});

void check_divisible(int h, int w, int levels);

}  // namespace layerforge::pyramid
