#pragma once

#include <array>

#include "layerforge/tensor.hpp"

namespace layerforge {

enum class Pad { valid, same };

// Geometry of one conv application, named by the conv roles. Transposed
// convolution reuses it with its own input on the (out_h, out_w) side.
struct ConvGeom {
  int in_h = 0, in_w = 0, in_c = 0;
  int k = 0, stride = 1;
  int out_h = 0, out_w = 0, out_c = 0;
  int pad_y = 0, pad_x = 0;  // leading pad
};

// valid: out = floor((in - k) / stride) + 1, requires in >= k
// same:  out = ceil(in / stride), asymmetric pad with the extra pixel trailing
ConvGeom conv_geometry(const std::vector<int>& x_shape, const std::vector<int>& k_shape,
                       int stride, Pad pad);

// Geometry whose forward conv maps (out_h, out_w, Cin) -> (y_h, y_w, Cout).
// out_h/out_w <= 0 selects the canonical inverse size ((y-1)*stride + k for
// valid, y*stride for same); explicit sizes must still conv back to (y_h, y_w).
ConvGeom conv_transpose_geometry(const std::vector<int>& y_shape, const std::vector<int>& k_shape,
                                 int stride, Pad pad, int out_h, int out_w);

namespace kernels {

// x: (H, W, Cin), k: (k, k, Cin, Cout), y: (h, w, Cout)
Tensor conv_forward(const Tensor& x, const Tensor& k, const ConvGeom& g);
Tensor conv_backward_input(const Tensor& gy, const Tensor& k, const ConvGeom& g);
Tensor conv_backward_kernel(const Tensor& x, const Tensor& gy, const ConvGeom& g);

// Separable 5-tap blur with reflect-101 borders, per channel.
Tensor blur5(const Tensor& x, const std::array<double, 5>& taps);
Tensor blur5_adjoint(const Tensor& gy, const std::array<double, 5>& taps);

// out(y, x) = in(2y, 2x); output extent ceil(n / 2)
Tensor decimate2(const Tensor& x);
Tensor decimate2_adjoint(const Tensor& gy, int in_h, int in_w);

// out(2y, 2x) = in(y, x), zeros elsewhere; requires ceil(out/2) == in extent
Tensor zero_upsample2(const Tensor& x, int out_h, int out_w);
Tensor zero_upsample2_adjoint(const Tensor& gy, int in_h, int in_w);

// src row = min(floor(y * in_h / out_h), in_h - 1); exact block broadcast
// for integer factors
Tensor upsample_nearest(const Tensor& x, int out_h, int out_w);
Tensor upsample_nearest_adjoint(const Tensor& gy, int in_h, int in_w);

// Non-overlapping p x p mean pooling; extents must be divisible by p.
Tensor avg_pool(const Tensor& x, int p);
Tensor avg_pool_adjoint(const Tensor& gy, int p, int in_h, int in_w);

// Separable Gaussian, radius ceil(3 sigma), reflect-101 borders.
Tensor gaussian_blur(const Tensor& x, double sigma);

}  // namespace kernels

}  // namespace layerforge
