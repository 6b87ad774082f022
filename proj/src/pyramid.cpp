#include "layerforge/pyramid.hpp"

#include "layerforge/kernels.hpp"
#include "layerforge/ops.hpp"

namespace layerforge::pyramid {

void check_divisible(int h, int w, int levels) {
  if (levels < 1) throw ConfigError("pyramid: levels must be >= 1");
  int f = 1 << (levels - 1);
  if (h % f != 0 || w % f != 0) {
    throw DimensionError("pyramid: extents " + std::to_string(h) + "x" + std::to_string(w) +
                         " not divisible by " + std::to_string(f));
  }
  if (h / f < 1 || w / f < 1) throw DimensionError("pyramid: too many levels for image");
}

Tensor downsample(const Tensor& x, const Options& opt) {
  return kernels::decimate2(kernels::blur5(x, opt.taps));
}

Tensor upsample(const Tensor& x, int out_h, int out_w, const Options& opt) {
  return scale(kernels::blur5(kernels::zero_upsample2(x, out_h, out_w), opt.taps), real(4));
}

Tensor upsample_field(const Tensor& field, int out_h, int out_w) {
  require_rank(field, 3, "upsample_field");
  if (out_h < field.extent(0) || out_w < field.extent(1)) {
    throw DimensionError("upsample_field: target smaller than source");
  }
  return kernels::upsample_nearest(field, out_h, out_w);
}

LaplacianPyramid build_pyramid(const Tensor& image, int levels, const Options& opt) {
  require_rank(image, 3, "build_pyramid");
  check_divisible(image.extent(0), image.extent(1), levels);
  LaplacianPyramid pyr;
  Tensor current = image;
  for (int l = 0; l + 1 < levels; ++l) {
    Tensor low = downsample(current, opt);
    Tensor up = upsample(low, current.extent(0), current.extent(1), opt);
    pyr.levels.push_back(sub(current, up));
    current = std::move(low);
  }
  pyr.levels.push_back(std::move(current));
  return pyr;
}

Tensor reconstruct(const LaplacianPyramid& pyr, const Options& opt) {
  if (pyr.levels.empty()) throw ConfigError("reconstruct: empty pyramid");
  Tensor acc = pyr.levels.back();
  for (int l = pyr.depth() - 2; l >= 0; --l) {
    const Tensor& band = pyr.levels[static_cast<std::size_t>(l)];
    acc = add(band, upsample(acc, band.extent(0), band.extent(1), opt));
  }
  return acc;
}

std::vector<Var> build_pyramid(Var image, int levels, const Options& opt) {
  Graph& g = *image.graph;
  const Tensor& img = g.value(image);
  require_rank(img, 3, "build_pyramid");
  check_divisible(img.extent(0), img.extent(1), levels);
  std::vector<Var> out;
  Var current = image;
  for (int l = 0; l + 1 < levels; ++l) {
    int h = g.value(current).extent(0), w = g.value(current).extent(1);
    Var low = decimate2(blur5(current, opt.taps));
    Var up = affine(blur5(zero_upsample2(low, h, w), opt.taps), real(4), 0);
    out.push_back(sub(current, up));
    current = low;
  }
  out.push_back(current);
  return out;
}

Var reconstruct(const std::vector<Var>& levels, const Options& opt) {
  if (levels.empty()) throw ConfigError("reconstruct: empty pyramid");
  Graph& g = *levels[0].graph;
  Var acc = levels.back();
  for (int l = static_cast<int>(levels.size()) - 2; l >= 0; --l) {
    Var band = levels[static_cast<std::size_t>(l)];
    int h = g.value(band).extent(0), w = g.value(band).extent(1);
    acc = add(band, affine(blur5(zero_upsample2(acc, h, w), opt.taps), real(4), 0));
  }
  return acc;
}

}  // namespace layerforge::pyramid
