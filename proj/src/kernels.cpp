#include "layerforge/kernels.hpp"

#include <cmath>

namespace layerforge {

namespace {

int out_extent(int in, int k, int stride, Pad pad) {
  if (pad == Pad::valid) {
    if (in < k) {
      throw DimensionError("conv: input extent " + std::to_string(in) +
                           " smaller than kernel " + std::to_string(k));
    }
    return (in - k) / stride + 1;
  }
  return (in + stride - 1) / stride;
}

int lead_pad(int in, int out, int k, int stride, Pad pad) {
  if (pad == Pad::valid) return 0;
  int total = (out - 1) * stride + k - in;
  if (total < 0) total = 0;
  return total / 2;
}

// reflect-101: ... 2 1 | 0 1 2 ... n-1 | n-2 n-3 ...
int reflect(int i, int n) {
  if (n == 1) return 0;
  while (i < 0 || i >= n) {
    if (i < 0) i = -i;
    if (i >= n) i = 2 * n - 2 - i;
  }
  return i;
}

}  // namespace

ConvGeom conv_geometry(const std::vector<int>& x_shape, const std::vector<int>& k_shape,
                       int stride, Pad pad) {
  if (x_shape.size() != 3) throw DimensionError("conv: input must be (H, W, C)");
  if (k_shape.size() != 4) throw DimensionError("conv: kernel must be (k, k, Cin, Cout)");
  if (k_shape[0] != k_shape[1]) throw DimensionError("conv: kernel must be square");
  if (stride < 1) throw ConfigError("conv: stride must be >= 1");
  if (x_shape[2] != k_shape[2]) {
    throw DimensionError("conv: input channels " + std::to_string(x_shape[2]) +
                         " != kernel Cin " + std::to_string(k_shape[2]));
  }
  ConvGeom g;
  g.in_h = x_shape[0];
  g.in_w = x_shape[1];
  g.in_c = x_shape[2];
  g.k = k_shape[0];
  g.stride = stride;
  g.out_c = k_shape[3];
  g.out_h = out_extent(g.in_h, g.k, stride, pad);
  g.out_w = out_extent(g.in_w, g.k, stride, pad);
  g.pad_y = lead_pad(g.in_h, g.out_h, g.k, stride, pad);
  g.pad_x = lead_pad(g.in_w, g.out_w, g.k, stride, pad);
  return g;
}

ConvGeom conv_transpose_geometry(const std::vector<int>& y_shape, const std::vector<int>& k_shape,
                                 int stride, Pad pad, int out_h, int out_w) {
  if (y_shape.size() != 3) throw DimensionError("conv_transpose: input must be (h, w, C)");
  if (k_shape.size() != 4) throw DimensionError("conv_transpose: kernel must be (k, k, Cin, Cout)");
  if (y_shape[2] != k_shape[3]) {
    throw DimensionError("conv_transpose: input channels " + std::to_string(y_shape[2]) +
                         " != kernel Cout " + std::to_string(k_shape[3]));
  }
  int k = k_shape[0];
  if (out_h <= 0) out_h = pad == Pad::valid ? (y_shape[0] - 1) * stride + k : y_shape[0] * stride;
  if (out_w <= 0) out_w = pad == Pad::valid ? (y_shape[1] - 1) * stride + k : y_shape[1] * stride;
  ConvGeom g = conv_geometry({out_h, out_w, k_shape[2]}, k_shape, stride, pad);
  if (g.out_h != y_shape[0] || g.out_w != y_shape[1]) {
    throw DimensionError("conv_transpose: output size (" + std::to_string(out_h) + "," +
                         std::to_string(out_w) + ") does not conv back to (" +
                         std::to_string(y_shape[0]) + "," + std::to_string(y_shape[1]) + ")");
  }
  return g;
}

namespace kernels {

Tensor conv_forward(const Tensor& x, const Tensor& k, const ConvGeom& g) {
  Tensor y({g.out_h, g.out_w, g.out_c});
  const real* xd = x.data();
  const real* kd = k.data();
  real* yd = y.data();
  for (int oy = 0; oy < g.out_h; ++oy) {
    int iy0 = oy * g.stride - g.pad_y;
    for (int ox = 0; ox < g.out_w; ++ox) {
      int ix0 = ox * g.stride - g.pad_x;
      real* dst = yd + (static_cast<std::size_t>(oy) * g.out_w + ox) * g.out_c;
      for (int ky = 0; ky < g.k; ++ky) {
        int iy = iy0 + ky;
        if (iy < 0 || iy >= g.in_h) continue;
        for (int kx = 0; kx < g.k; ++kx) {
          int ix = ix0 + kx;
          if (ix < 0 || ix >= g.in_w) continue;
          const real* src = xd + (static_cast<std::size_t>(iy) * g.in_w + ix) * g.in_c;
          const real* krow = kd + (static_cast<std::size_t>(ky) * g.k + kx) * g.in_c * g.out_c;
          for (int ci = 0; ci < g.in_c; ++ci) {
            real xv = src[ci];
            const real* kr = krow + static_cast<std::size_t>(ci) * g.out_c;
            for (int co = 0; co < g.out_c; ++co) dst[co] += xv * kr[co];
          }
        }
      }
    }
  }
  return y;
}

Tensor conv_backward_input(const Tensor& gy, const Tensor& k, const ConvGeom& g) {
  Tensor gx({g.in_h, g.in_w, g.in_c});
  const real* gyd = gy.data();
  const real* kd = k.data();
  real* gxd = gx.data();
  for (int oy = 0; oy < g.out_h; ++oy) {
    int iy0 = oy * g.stride - g.pad_y;
    for (int ox = 0; ox < g.out_w; ++ox) {
      int ix0 = ox * g.stride - g.pad_x;
      const real* gout = gyd + (static_cast<std::size_t>(oy) * g.out_w + ox) * g.out_c;
      for (int ky = 0; ky < g.k; ++ky) {
        int iy = iy0 + ky;
        if (iy < 0 || iy >= g.in_h) continue;
        for (int kx = 0; kx < g.k; ++kx) {
          int ix = ix0 + kx;
          if (ix < 0 || ix >= g.in_w) continue;
          real* dst = gxd + (static_cast<std::size_t>(iy) * g.in_w + ix) * g.in_c;
          const real* krow = kd + (static_cast<std::size_t>(ky) * g.k + kx) * g.in_c * g.out_c;
          for (int ci = 0; ci < g.in_c; ++ci) {
            const real* kr = krow + static_cast<std::size_t>(ci) * g.out_c;
            real acc = 0;
            for (int co = 0; co < g.out_c; ++co) acc += gout[co] * kr[co];
            dst[ci] += acc;
          }
        }
      }
    }
  }
  return gx;
}

Tensor conv_backward_kernel(const Tensor& x, const Tensor& gy, const ConvGeom& g) {
  Tensor gk({g.k, g.k, g.in_c, g.out_c});
  const real* xd = x.data();
  const real* gyd = gy.data();
  real* gkd = gk.data();
  for (int oy = 0; oy < g.out_h; ++oy) {
    int iy0 = oy * g.stride - g.pad_y;
    for (int ox = 0; ox < g.out_w; ++ox) {
      int ix0 = ox * g.stride - g.pad_x;
      const real* gout = gyd + (static_cast<std::size_t>(oy) * g.out_w + ox) * g.out_c;
      for (int ky = 0; ky < g.k; ++ky) {
        int iy = iy0 + ky;
        if (iy < 0 || iy >= g.in_h) continue;
        for (int kx = 0; kx < g.k; ++kx) {
          int ix = ix0 + kx;
          if (ix < 0 || ix >= g.in_w) continue;
          const real* src = xd + (static_cast<std::size_t>(iy) * g.in_w + ix) * g.in_c;
          real* krow = gkd + (static_cast<std::size_t>(ky) * g.k + kx) * g.in_c * g.out_c;
          for (int ci = 0; ci < g.in_c; ++ci) {
            real xv = src[ci];
            real* kr = krow + static_cast<std::size_t>(ci) * g.out_c;
            for (int co = 0; co < g.out_c; ++co) kr[co] += xv * gout[co];
          }
        }
      }
    }
  }
  return gk;
}

namespace {

// dir 0: rows (vertical taps), dir 1: columns
Tensor blur5_axis(const Tensor& x, const std::array<double, 5>& taps, int dir, bool adjoint) {
  int h = x.extent(0), w = x.extent(1), c = x.extent(2);
  Tensor y({h, w, c});
  const real* xd = x.data();
  real* yd = y.data();
  int n = dir == 0 ? h : w;
  for (int yy = 0; yy < h; ++yy) {
    for (int xx = 0; xx < w; ++xx) {
      int center = dir == 0 ? yy : xx;
      std::size_t base_out = (static_cast<std::size_t>(yy) * w + xx) * c;
      for (int t = 0; t < 5; ++t) {
        int src = reflect(center + t - 2, n);
        real tap = static_cast<real>(taps[static_cast<std::size_t>(t)]);
        std::size_t base_in = dir == 0 ? (static_cast<std::size_t>(src) * w + xx) * c
                                       : (static_cast<std::size_t>(yy) * w + src) * c;
        if (!adjoint) {
          for (int ch = 0; ch < c; ++ch) yd[base_out + ch] += tap * xd[base_in + ch];
        } else {
          for (int ch = 0; ch < c; ++ch) yd[base_in + ch] += tap * xd[base_out + ch];
        }
      }
    }
  }
  return y;
}

}  // namespace

Tensor blur5(const Tensor& x, const std::array<double, 5>& taps) {
  require_rank(x, 3, "blur5");
  return blur5_axis(blur5_axis(x, taps, 0, false), taps, 1, false);
}

Tensor blur5_adjoint(const Tensor& gy, const std::array<double, 5>& taps) {
  require_rank(gy, 3, "blur5_adjoint");
  return blur5_axis(blur5_axis(gy, taps, 1, true), taps, 0, true);
}

Tensor decimate2(const Tensor& x) {
  require_rank(x, 3, "decimate2");
  int h = x.extent(0), w = x.extent(1), c = x.extent(2);
  int oh = (h + 1) / 2, ow = (w + 1) / 2;
  Tensor y({oh, ow, c});
  for (int yy = 0; yy < oh; ++yy)
    for (int xx = 0; xx < ow; ++xx)
      for (int ch = 0; ch < c; ++ch) y.at3(yy, xx, ch) = x.at3(2 * yy, 2 * xx, ch);
  return y;
}

Tensor decimate2_adjoint(const Tensor& gy, int in_h, int in_w) {
  int c = gy.extent(2);
  Tensor gx({in_h, in_w, c});
  for (int yy = 0; yy < gy.extent(0); ++yy)
    for (int xx = 0; xx < gy.extent(1); ++xx)
      for (int ch = 0; ch < c; ++ch) gx.at3(2 * yy, 2 * xx, ch) = gy.at3(yy, xx, ch);
  return gx;
}

Tensor zero_upsample2(const Tensor& x, int out_h, int out_w) {
  require_rank(x, 3, "zero_upsample2");
  if ((out_h + 1) / 2 != x.extent(0) || (out_w + 1) / 2 != x.extent(1)) {
    throw DimensionError("zero_upsample2: output " + std::to_string(out_h) + "x" +
                         std::to_string(out_w) + " incompatible with input " +
                         shape_str(x.shape()));
  }
  Tensor y({out_h, out_w, x.extent(2)});
  for (int yy = 0; yy < x.extent(0); ++yy)
    for (int xx = 0; xx < x.extent(1); ++xx)
      for (int ch = 0; ch < x.extent(2); ++ch) y.at3(2 * yy, 2 * xx, ch) = x.at3(yy, xx, ch);
  return y;
}

Tensor zero_upsample2_adjoint(const Tensor& gy, int in_h, int in_w) {
  Tensor gx({in_h, in_w, gy.extent(2)});
  for (int yy = 0; yy < in_h; ++yy)
    for (int xx = 0; xx < in_w; ++xx)
      for (int ch = 0; ch < gy.extent(2); ++ch) gx.at3(yy, xx, ch) = gy.at3(2 * yy, 2 * xx, ch);
  return gx;
}

Tensor upsample_nearest(const Tensor& x, int out_h, int out_w) {
  require_rank(x, 3, "upsample_nearest");
  int h = x.extent(0), w = x.extent(1), c = x.extent(2);
  Tensor y({out_h, out_w, c});
  for (int yy = 0; yy < out_h; ++yy) {
    int sy = std::min(static_cast<int>(static_cast<long long>(yy) * h / out_h), h - 1);
    for (int xx = 0; xx < out_w; ++xx) {
      int sx = std::min(static_cast<int>(static_cast<long long>(xx) * w / out_w), w - 1);
      for (int ch = 0; ch < c; ++ch) y.at3(yy, xx, ch) = x.at3(sy, sx, ch);
    }
  }
  return y;
}

Tensor upsample_nearest_adjoint(const Tensor& gy, int in_h, int in_w) {
  int c = gy.extent(2);
  Tensor gx({in_h, in_w, c});
  int oh = gy.extent(0), ow = gy.extent(1);
  for (int yy = 0; yy < oh; ++yy) {
    int sy = std::min(static_cast<int>(static_cast<long long>(yy) * in_h / oh), in_h - 1);
    for (int xx = 0; xx < ow; ++xx) {
      int sx = std::min(static_cast<int>(static_cast<long long>(xx) * in_w / ow), in_w - 1);
      for (int ch = 0; ch < c; ++ch) gx.at3(sy, sx, ch) += gy.at3(yy, xx, ch);
    }
  }
  return gx;
}

Tensor avg_pool(const Tensor& x, int p) {
  require_rank(x, 3, "avg_pool");
  if (p < 1 || x.extent(0) % p != 0 || x.extent(1) % p != 0) {
    throw DimensionError("avg_pool: extents " + shape_str(x.shape()) +
                         " not divisible by " + std::to_string(p));
  }
  int oh = x.extent(0) / p, ow = x.extent(1) / p, c = x.extent(2);
  Tensor y({oh, ow, c});
  real inv = real(1) / static_cast<real>(p * p);
  for (int yy = 0; yy < oh; ++yy)
    for (int xx = 0; xx < ow; ++xx)
      for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx)
          for (int ch = 0; ch < c; ++ch)
            y.at3(yy, xx, ch) += inv * x.at3(yy * p + dy, xx * p + dx, ch);
  return y;
}

Tensor avg_pool_adjoint(const Tensor& gy, int p, int in_h, int in_w) {
  int c = gy.extent(2);
  Tensor gx({in_h, in_w, c});
  real inv = real(1) / static_cast<real>(p * p);
  for (int yy = 0; yy < gy.extent(0); ++yy)
    for (int xx = 0; xx < gy.extent(1); ++xx)
      for (int dy = 0; dy < p; ++dy)
        for (int dx = 0; dx < p; ++dx)
          for (int ch = 0; ch < c; ++ch)
            gx.at3(yy * p + dy, xx * p + dx, ch) = inv * gy.at3(yy, xx, ch);
  return gx;
}

Tensor gaussian_blur(const Tensor& x, double sigma) {
  require_rank(x, 3, "gaussian_blur");
  if (sigma <= 0) return x;
  int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<real> taps(static_cast<std::size_t>(2 * radius + 1));
  real total = 0;
  for (int i = -radius; i <= radius; ++i) {
    real v = static_cast<real>(std::exp(-0.5 * (i / sigma) * (i / sigma)));
    taps[static_cast<std::size_t>(i + radius)] = v;
    total += v;
  }
  for (auto& t : taps) t /= total;
  int h = x.extent(0), w = x.extent(1), c = x.extent(2);
  Tensor tmp({h, w, c});
  for (int yy = 0; yy < h; ++yy)
    for (int xx = 0; xx < w; ++xx)
      for (int t = -radius; t <= radius; ++t) {
        int sy = reflect(yy + t, h);
        real tap = taps[static_cast<std::size_t>(t + radius)];
        for (int ch = 0; ch < c; ++ch) tmp.at3(yy, xx, ch) += tap * x.at3(sy, xx, ch);
      }
  Tensor out({h, w, c});
  for (int yy = 0; yy < h; ++yy)
    for (int xx = 0; xx < w; ++xx)
      for (int t = -radius; t <= radius; ++t) {
        int sx = reflect(xx + t, w);
        real tap = taps[static_cast<std::size_t>(t + radius)];
        for (int ch = 0; ch < c; ++ch) out.at3(yy, xx, ch) += tap * tmp.at3(yy, sx, ch);
      }
  return out;
}

}  // namespace kernels

}  // namespace layerforge
