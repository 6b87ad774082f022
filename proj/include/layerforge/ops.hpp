#pragma once

#include <array>
#include <vector>

#include "layerforge/graph.hpp"
#include "layerforge/kernels.hpp"

namespace layerforge {

// Plain-tensor forms. Differentiable forms below share the same kernels.
Tensor conv2d(const Tensor& x, const Tensor& k, int stride, Pad pad);
Tensor conv2d_transpose(const Tensor& x, const Tensor& k, int stride, Pad pad,
                        int out_h = -1, int out_w = -1);

Var conv2d(Var x, Var k, int stride, Pad pad);
Var conv2d_transpose(Var x, Var k, int stride, Pad pad, int out_h = -1, int out_w = -1);

// Flattens x, applies y = x W + b. w_: (n, m), b: (m).
Var dense(Var x, Var w, Var b);
// x: (H, W, C) plus per-channel bias (C).
Var add_bias(Var x, Var b);

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var add_n(const std::vector<Var>& xs);
// a * x + b elementwise
Var affine(Var x, real a, real b);

Var exp_(Var x);
Var log_(Var x);
Var square(Var x);
Var abs_(Var x);
// value sqrt(max(x, 0)); zero gradient at x <= 0
Var sqrt_safe(Var x);
Var leaky_relu(Var x, real slope);
Var sigmoid_(Var x);

// scalar (single element) reductions
Var sum(Var x);
Var mean(Var x);

Var reshape(Var x, std::vector<int> shape);
Var slice_ch(Var x, int c0, int c1);
Var concat_ch(const std::vector<Var>& xs);
Var crop2d(Var x, int y0, int x0, int h, int w);

Var blur5(Var x, const std::array<double, 5>& taps);
Var decimate2(Var x);
Var zero_upsample2(Var x, int out_h, int out_w);
Var upsample_nearest(Var x, int out_h, int out_w);
Var avg_pool(Var x, int p);

// log(max(x, floor)) elementwise; warns to stderr once per call when clamping.
Tensor to_log_domain(const Tensor& x, real floor = real(1e-3));
Tensor to_linear_domain(const Tensor& log_x);

}  // namespace layerforge
