#include "layerforge/ops.hpp"

#include <cmath>
#include <iostream>

namespace layerforge {

namespace {

Graph& same_graph(Var a, Var b) {
  if (a.graph != b.graph) throw ConfigError("ops: operands on different tapes");
  return *a.graph;
}

Var elementwise_binary(Var a, Var b, void (*fwd)(const Tensor&, const Tensor&, Tensor&),
                       void (*bwd)(Graph&, int, Var, Var)) {
  Graph& g = same_graph(a, b);
  const Tensor& av = g.value(a);
  const Tensor& bv = g.value(b);
  if (!av.same_shape(bv)) {
    throw DimensionError("ops: shape mismatch " + shape_str(av.shape()) + " vs " +
                         shape_str(bv.shape()));
  }
  Tensor out(av.shape());
  fwd(av, bv, out);
  return g.emit(std::move(out), {a, b},
                [a, b, bwd](Graph& gg, int node) { bwd(gg, node, a, b); });
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& k, int stride, Pad pad) {
  ConvGeom g = conv_geometry(x.shape(), k.shape(), stride, pad);
  return kernels::conv_forward(x, k, g);
}

Tensor conv2d_transpose(const Tensor& x, const Tensor& k, int stride, Pad pad,
                        int out_h, int out_w) {
  ConvGeom g = conv_transpose_geometry(x.shape(), k.shape(), stride, pad, out_h, out_w);
  return kernels::conv_backward_input(x, k, g);
}

Var conv2d(Var x, Var k, int stride, Pad pad) {
  Graph& g = same_graph(x, k);
  ConvGeom geom = conv_geometry(g.value(x).shape(), g.value(k).shape(), stride, pad);
  Tensor y = kernels::conv_forward(g.value(x), g.value(k), geom);
  return g.emit(std::move(y), {x, k}, [x, k, geom](Graph& gg, int node) {
    const Tensor& gy = gg.grad_of(node);
    if (gg.needs_grad(x)) gg.add_grad(x, kernels::conv_backward_input(gy, gg.value(k), geom));
    if (gg.needs_grad(k)) gg.add_grad(k, kernels::conv_backward_kernel(gg.value(x), gy, geom));
  });
}

Var conv2d_transpose(Var x, Var k, int stride, Pad pad, int out_h, int out_w) {
  Graph& g = same_graph(x, k);
  ConvGeom geom =
      conv_transpose_geometry(g.value(x).shape(), g.value(k).shape(), stride, pad, out_h, out_w);
  Tensor y = kernels::conv_backward_input(g.value(x), g.value(k), geom);
  return g.emit(std::move(y), {x, k}, [x, k, geom](Graph& gg, int node) {
    const Tensor& gy = gg.grad_of(node);
    if (gg.needs_grad(x)) gg.add_grad(x, kernels::conv_forward(gy, gg.value(k), geom));
    if (gg.needs_grad(k)) gg.add_grad(k, kernels::conv_backward_kernel(gy, gg.value(x), geom));
  });
}

Var dense(Var x, Var w, Var b) {
  same_graph(w, b);
  Graph& g = same_graph(x, w);
  const Tensor& xv = g.value(x);
  const Tensor& wv = g.value(w);
  const Tensor& bv = g.value(b);
  require_rank(wv, 2, "dense weight");
  int n = wv.extent(0), m = wv.extent(1);
  if (static_cast<int>(xv.size()) != n) {
    throw DimensionError("dense: input size " + std::to_string(xv.size()) +
                         " != weight rows " + std::to_string(n));
  }
  require_shape(bv, {m}, "dense bias");
  Tensor y({m});
  for (int i = 0; i < n; ++i) {
    real xi = xv[static_cast<std::size_t>(i)];
    const real* wr = wv.data() + static_cast<std::size_t>(i) * m;
    for (int j = 0; j < m; ++j) y[static_cast<std::size_t>(j)] += xi * wr[j];
  }
  for (int j = 0; j < m; ++j) y[static_cast<std::size_t>(j)] += bv[static_cast<std::size_t>(j)];
  return g.emit(std::move(y), {x, w, b}, [x, w, b, n, m](Graph& gg, int node) {
    const Tensor& gy = gg.grad_of(node);
    const Tensor& xv = gg.value(x);
    const Tensor& wv = gg.value(w);
    if (gg.needs_grad(x)) {
      Tensor gx(xv.shape());
      for (int i = 0; i < n; ++i) {
        const real* wr = wv.data() + static_cast<std::size_t>(i) * m;
        real acc = 0;
        for (int j = 0; j < m; ++j) acc += wr[j] * gy[static_cast<std::size_t>(j)];
        gx[static_cast<std::size_t>(i)] = acc;
      }
      gg.add_grad(x, std::move(gx));
    }
    if (gg.needs_grad(w)) {
      Tensor gw(wv.shape());
      for (int i = 0; i < n; ++i) {
        real xi = xv[static_cast<std::size_t>(i)];
        real* wr = gw.data() + static_cast<std::size_t>(i) * m;
        for (int j = 0; j < m; ++j) wr[j] = xi * gy[static_cast<std::size_t>(j)];
      }
      gg.add_grad(w, std::move(gw));
    }
    if (gg.needs_grad(b)) gg.add_grad(b, gy);
  });
}

Var add_bias(Var x, Var b) {
  Graph& g = same_graph(x, b);
  const Tensor& xv = g.value(x);
  const Tensor& bv = g.value(b);
  require_rank(xv, 3, "add_bias input");
  require_shape(bv, {xv.extent(2)}, "add_bias bias");
  int c = xv.extent(2);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] + bv[i % static_cast<std::size_t>(c)];
  return g.emit(std::move(y), {x, b}, [x, b, c](Graph& gg, int node) {
    const Tensor& gy = gg.grad_of(node);
    if (gg.needs_grad(x)) gg.add_grad(x, gy);
    if (gg.needs_grad(b)) {
      Tensor gb({c});
      for (std::size_t i = 0; i < gy.size(); ++i) gb[i % static_cast<std::size_t>(c)] += gy[i];
      gg.add_grad(b, std::move(gb));
    }
  });
}

Var add(Var a, Var b) {
  return elementwise_binary(
      a, b,
      [](const Tensor& av, const Tensor& bv, Tensor& out) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
      },
      [](Graph& gg, int node, Var a, Var b) {
        const Tensor& gy = gg.grad_of(node);
        if (gg.needs_grad(a)) gg.add_grad(a, gy);
        if (gg.needs_grad(b)) gg.add_grad(b, gy);
      });
}

Var sub(Var a, Var b) {
  return elementwise_binary(
      a, b,
      [](const Tensor& av, const Tensor& bv, Tensor& out) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
      },
      [](Graph& gg, int node, Var a, Var b) {
        const Tensor& gy = gg.grad_of(node);
        if (gg.needs_grad(a)) gg.add_grad(a, gy);
        if (gg.needs_grad(b)) {
          Tensor gb(gy.shape());
          for (std::size_t i = 0; i < gy.size(); ++i) gb[i] = -gy[i];
          gg.add_grad(b, std::move(gb));
        }
      });
}

Var mul(Var a, Var b) {
  return elementwise_binary(
      a, b,
      [](const Tensor& av, const Tensor& bv, Tensor& out) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
      },
      [](Graph& gg, int node, Var a, Var b) {
        const Tensor& gy = gg.grad_of(node);
        const Tensor& av = gg.value(a);
        const Tensor& bv = gg.value(b);
        if (gg.needs_grad(a)) {
          Tensor ga(gy.shape());
          for (std::size_t i = 0; i < gy.size(); ++i) ga[i] = gy[i] * bv[i];
          gg.add_grad(a, std::move(ga));
        }
        if (gg.needs_grad(b)) {
          Tensor gb(gy.shape());
          for (std::size_t i = 0; i < gy.size(); ++i) gb[i] = gy[i] * av[i];
          gg.add_grad(b, std::move(gb));
        }
      });
}

Var add_n(const std::vector<Var>& xs) {
  if (xs.empty()) throw ConfigError("add_n: empty operand list");
  Graph& g = *xs[0].graph;
  Tensor out(g.value(xs[0]).shape());
  for (Var v : xs) {
    const Tensor& t = g.value(v);
    if (!t.same_shape(out)) throw DimensionError("add_n: shape mismatch");
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += t[i];
  }
  return g.emit(std::move(out), xs, [xs](Graph& gg, int node) {
    const Tensor& gy = gg.grad_of(node);
    for (Var v : xs) {
      if (gg.needs_grad(v)) gg.add_grad(v, gy);
    }
  });
}

namespace {

Var elementwise_unary(Var x, real (*fwd)(real), real (*dfdx)(real)) {
  Graph& g = *x.graph;
  const Tensor& xv = g.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = fwd(xv[i]);
  return g.emit(std::move(y), {x}, [x, dfdx](Graph& gg, int node) {
    const Tensor& gy = gg.grad_of(node);
    const Tensor& xv = gg.value(x);
    Tensor gx(gy.shape());
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] = gy[i] * dfdx(xv[i]);
    gg.add_grad(x, std::move(gx));
  });
}

}  // namespace

Var affine(Var x, real a, real b) {
  Graph& g = *x.graph;
  const Tensor& xv = g.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = a * xv[i] + b;
  return g.emit(std::move(y), {x}, [x, a](Graph& gg, int node) {
    const Tensor& gy = gg.grad_of(node);
    Tensor gx(gy.shape());
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] = a * gy[i];
    gg.add_grad(x, std::move(gx));
  });
}

Var exp_(Var x) {
  return elementwise_unary(
      x, [](real v) { return std::exp(v); }, [](real v) { return std::exp(v); });
}

Var log_(Var x) {
  const Tensor& xv = x.graph->value(x);
  for (std::size_t i = 0; i < xv.size(); ++i) {
    if (!(xv[i] > real(0))) throw NumericError("log: non-positive input");
  }
  return elementwise_unary(
      x, [](real v) { return std::log(v); }, [](real v) { return real(1) / v; });
}

Var square(Var x) {
  return elementwise_unary(
      x, [](real v) { return v * v; }, [](real v) { return real(2) * v; });
}

Var abs_(Var x) {
  return elementwise_unary(
      x, [](real v) { return std::abs(v); },
      [](real v) { return v > real(0) ? real(1) : (v < real(0) ? real(-1) : real(0)); });
}

Var sqrt_safe(Var x) {
  return elementwise_unary(
      x, [](real v) { return v > real(0) ? std::sqrt(v) : real(0); },
      [](real v) { return v > real(0) ? real(0.5) / std::sqrt(v) : real(0); });
}

Var leaky_relu(Var x, real slope) {
  Graph& g = *x.graph;
  const Tensor& xv = g.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = xv[i] >= real(0) ? xv[i] : slope * xv[i];
  return g.emit(std::move(y), {x}, [x, slope](Graph& gg, int node) {
    const Tensor& gy = gg.grad_of(node);
    const Tensor& xv = gg.value(x);
    Tensor gx(gy.shape());
    for (std::size_t i = 0; i < gy.size(); ++i)
      gx[i] = xv[i] >= real(0) ? gy[i] : slope * gy[i];
    gg.add_grad(x, std::move(gx));
  });
}

Var sigmoid_(Var x) {
  Graph& g = *x.graph;
  const Tensor& xv = g.value(x);
  Tensor y(xv.shape());
  for (std::size_t i = 0; i < xv.size(); ++i) y[i] = real(1) / (real(1) + std::exp(-xv[i]));
  Tensor yv = y;
  return g.emit(std::move(y), {x}, [x, yv](Graph& gg, int node) {
    const Tensor& gy = gg.grad_of(node);
    Tensor gx(gy.shape());
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] = gy[i] * yv[i] * (real(1) - yv[i]);
    gg.add_grad(x, std::move(gx));
  });
}

Var sum(Var x) {
  Graph& g = *x.graph;
  const Tensor& xv = g.value(x);
  real s = 0;
  for (std::size_t i = 0; i < xv.size(); ++i) s += xv[i];
  return g.emit(Tensor::scalar(s), {x}, [x](Graph& gg, int node) {
    real go = gg.grad_of(node)[0];
    Tensor gx(gg.value(x).shape());
    for (std::size_t i = 0; i < gx.size(); ++i) gx[i] = go;
    gg.add_grad(x, std::move(gx));
  });
}

Var mean(Var x) {
  std::size_t n = x.graph->value(x).size();
  if (n == 0) throw DimensionError("mean of empty tensor");
  return affine(sum(x), real(1) / static_cast<real>(n), 0);
}

Var reshape(Var x, std::vector<int> shape) {
  Graph& g = *x.graph;
  Tensor y = g.value(x).reshaped(shape);
  return g.emit(std::move(y), {x}, [x](Graph& gg, int node) {
    gg.add_grad(x, gg.grad_of(node).reshaped(gg.value(x).shape()));
  });
}

Var slice_ch(Var x, int c0, int c1) {
  Graph& g = *x.graph;
  const Tensor& xv = g.value(x);
  require_rank(xv, 3, "slice_ch");
  int h = xv.extent(0), w = xv.extent(1), c = xv.extent(2);
  if (c0 < 0 || c1 > c || c0 >= c1) throw DimensionError("slice_ch: bad channel range");
  Tensor y({h, w, c1 - c0});
  for (int yy = 0; yy < h; ++yy)
    for (int xx = 0; xx < w; ++xx)
      for (int ch = c0; ch < c1; ++ch) y.at3(yy, xx, ch - c0) = xv.at3(yy, xx, ch);
  return g.emit(std::move(y), {x}, [x, c0, c1](Graph& gg, int node) {
    const Tensor& gy = gg.grad_of(node);
    Tensor gx(gg.value(x).shape());
    int h = gx.extent(0), w = gx.extent(1);
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx)
        for (int ch = c0; ch < c1; ++ch) gx.at3(yy, xx, ch) = gy.at3(yy, xx, ch - c0);
    gg.add_grad(x, std::move(gx));
  });
}

Var concat_ch(const std::vector<Var>& xs) {
  if (xs.empty()) throw ConfigError("concat_ch: empty operand list");
  Graph& g = *xs[0].graph;
  int h = g.value(xs[0]).extent(0), w = g.value(xs[0]).extent(1);
  int c_total = 0;
  for (Var v : xs) {
    const Tensor& t = g.value(v);
    require_rank(t, 3, "concat_ch");
    if (t.extent(0) != h || t.extent(1) != w) {
      throw DimensionError("concat_ch: spatial mismatch");
    }
    c_total += t.extent(2);
  }
  Tensor y({h, w, c_total});
  int base = 0;
  for (Var v : xs) {
    const Tensor& t = g.value(v);
    int c = t.extent(2);
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx)
        for (int ch = 0; ch < c; ++ch) y.at3(yy, xx, base + ch) = t.at3(yy, xx, ch);
    base += c;
  }
  return g.emit(std::move(y), xs, [xs](Graph& gg, int node) {
    const Tensor& gy = gg.grad_of(node);
    int h = gy.extent(0), w = gy.extent(1);
    int base = 0;
    for (Var v : xs) {
      int c = gg.value(v).extent(2);
      if (gg.needs_grad(v)) {
        Tensor gx({h, w, c});
        for (int yy = 0; yy < h; ++yy)
          for (int xx = 0; xx < w; ++xx)
            for (int ch = 0; ch < c; ++ch) gx.at3(yy, xx, ch) = gy.at3(yy, xx, base + ch);
        gg.add_grad(v, std::move(gx));
      }
      base += c;
    }
  });
}

Var crop2d(Var x, int y0, int x0, int h, int w) {
  Graph& g = *x.graph;
  const Tensor& xv = g.value(x);
  require_rank(xv, 3, "crop2d");
  if (y0 < 0 || x0 < 0 || y0 + h > xv.extent(0) || x0 + w > xv.extent(1)) {
    throw DimensionError("crop2d: window outside input");
  }
  int c = xv.extent(2);
  Tensor y({h, w, c});
  for (int yy = 0; yy < h; ++yy)
    for (int xx = 0; xx < w; ++xx)
      for (int ch = 0; ch < c; ++ch) y.at3(yy, xx, ch) = xv.at3(y0 + yy, x0 + xx, ch);
  return g.emit(std::move(y), {x}, [x, y0, x0, h, w](Graph& gg, int node) {
    const Tensor& gy = gg.grad_of(node);
    Tensor gx(gg.value(x).shape());
    int c = gx.extent(2);
    for (int yy = 0; yy < h; ++yy)
      for (int xx = 0; xx < w; ++xx)
        for (int ch = 0; ch < c; ++ch) gx.at3(y0 + yy, x0 + xx, ch) = gy.at3(yy, xx, ch);
    gg.add_grad(x, std::move(gx));
  });
}

Var blur5(Var x, const std::array<double, 5>& taps) {
  Graph& g = *x.graph;
  Tensor y = kernels::blur5(g.value(x), taps);
  return g.emit(std::move(y), {x}, [x, taps](Graph& gg, int node) {
    gg.add_grad(x, kernels::blur5_adjoint(gg.grad_of(node), taps));
  });
}

Var decimate2(Var x) {
  Graph& g = *x.graph;
  const Tensor& xv = g.value(x);
  int h = xv.extent(0), w = xv.extent(1);
  Tensor y = kernels::decimate2(xv);
  return g.emit(std::move(y), {x}, [x, h, w](Graph& gg, int node) {
    gg.add_grad(x, kernels::decimate2_adjoint(gg.grad_of(node), h, w));
  });
}

Var zero_upsample2(Var x, int out_h, int out_w) {
  Graph& g = *x.graph;
  const Tensor& xv = g.value(x);
  int h = xv.extent(0), w = xv.extent(1);
  Tensor y = kernels::zero_upsample2(xv, out_h, out_w);
  return g.emit(std::move(y), {x}, [x, h, w](Graph& gg, int node) {
    gg.add_grad(x, kernels::zero_upsample2_adjoint(gg.grad_of(node), h, w));
  });
}

Var upsample_nearest(Var x, int out_h, int out_w) {
  Graph& g = *x.graph;
  const Tensor& xv = g.value(x);
  int h = xv.extent(0), w = xv.extent(1);
  Tensor y = kernels::upsample_nearest(xv, out_h, out_w);
  return g.emit(std::move(y), {x}, [x, h, w](Graph& gg, int node) {
    gg.add_grad(x, kernels::upsample_nearest_adjoint(gg.grad_of(node), h, w));
  });
}

Var avg_pool(Var x, int p) {
  Graph& g = *x.graph;
  const Tensor& xv = g.value(x);
  int h = xv.extent(0), w = xv.extent(1);
  Tensor y = kernels::avg_pool(xv, p);
  return g.emit(std::move(y), {x}, [x, p, h, w](Graph& gg, int node) {
    gg.add_grad(x, kernels::avg_pool_adjoint(gg.grad_of(node), p, h, w));
  });
}

Tensor to_log_domain(const Tensor& x, real floor) {
  Tensor y(x.shape());
  std::size_t clamped = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    real v = x[i];
    if (v < floor) {
      v = floor;
      ++clamped;
    }
    y[i] = std::log(v);
  }
  if (clamped > 0) {
    std::cerr << "warning: clamped " << clamped << " value(s) below " << floor
              << " before log\n";
  }
  return y;
}

Tensor to_linear_domain(const Tensor& log_x) {
  Tensor y(log_x.shape());
  for (std::size_t i = 0; i < log_x.size(); ++i) y[i] = std::exp(log_x[i]);
  return y;
}

}  // namespace layerforge
