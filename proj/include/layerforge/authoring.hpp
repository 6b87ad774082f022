#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "layerforge/tensor.hpp"

namespace layerforge::authoring {

// 16 evenly spaced hues (s = 0.7, v = 0.85); every Mondrian draws its two
// colors from this fixed wheel.
const std::array<std::array<double, 3>, 16>& default_palette();

struct MondrianSpec {
  int canvas = 150;
  int min_vertices = 3;
  int max_vertices = 8;
  std::uint64_t seed = 0;
};

// Flat background plus one centered scanline-filled polygon, exactly two
// palette colors, no anti-aliasing. Regenerates internally on degenerate
// polygons; errors after 100 attempts.
Tensor gen_mondrian(const MondrianSpec& spec);

enum class Primitive { sphere, cylinder, box, blend };

struct ShadingSpec {
  Primitive primitive = Primitive::sphere;
  std::array<double, 3> light{0.0, 0.0, 1.0};  // direction toward the light
  double fill = 0.10;
  double orientation = 0.0;  // cylinder/box rotation, radians
  double blend_mix = 0.5;    // blend: sphere weight
  int size = 128;
};

struct ShadedPrimitive {
  Tensor image;  // (S, S, 3) grayscale replicated
  Tensor mask;   // (S, S, 1) in {0, 1}
};

// intensity = max(n . l, 0) * (1 - fill) + fill on the object; background sits
// at the fill level and is flagged off in the mask.
ShadedPrimitive render_shading(const ShadingSpec& spec);
Tensor gen_shading(const ShadingSpec& spec);

enum class Texture { bump_noise, ripple, crease };

struct DetailSpec {
  Texture texture = Texture::bump_noise;
  double amplitude = 0.2;  // contrast around 0.5
  double scale = 6.0;      // feature size in pixels
  int size = 128;
  std::uint64_t seed = 0;
};

// High-frequency texture centered at 0.5 after gradient removal.
Tensor gen_detail(const DetailSpec& spec);

// Subtracts the least-squares plane per channel, recenters at 0.5, clips to [0, 1].
Tensor remove_gradient(const Tensor& image);

// I = exp(log A + log S [+ log D]); inputs are clamped at the log floor first.
Tensor compose(const Tensor& albedo, const Tensor& shading);
Tensor compose(const Tensor& albedo, const Tensor& shading, const Tensor& detail);

// Shift / 90-degree rotation / flip crop augmentation. The masked form
// rejection-samples until at least min_in_mask of the patch lies inside the
// mask, keeping the best candidate if none qualifies.
struct CropParams {
  int y0 = 0, x0 = 0;
  int rotation = 0;  // quarter turns
  bool flip = false;
};
CropParams sample_crop(int h, int w, int patch, std::uint64_t seed);
CropParams sample_crop(int h, int w, int patch, std::uint64_t seed, const Tensor& mask,
                       double min_in_mask = 0.8);
Tensor apply_crop(const Tensor& image, const CropParams& p, int patch);
Tensor crop_augment(const Tensor& image, int patch, std::uint64_t seed);
Tensor crop_augment(const Tensor& image, const Tensor& mask, int patch, std::uint64_t seed,
                    double min_in_mask = 0.8);

// Corpus on disk: corpus.json plus 16-bit PNGs (and raw float sidecars for
// composite ground truth).
struct CorpusOptions {
  std::string kind;  // mondrian | shading | detail | composite
  int n = 100;
  int size = 128;
  std::uint64_t seed = 0;
  bool with_detail = false;  // composite only
};

void write_corpus(const std::string& dir, const CorpusOptions& opt);

struct Corpus {
  std::string kind;
  std::vector<Tensor> images;                        // linear [0, 1]
  std::vector<Tensor> masks;                         // empty when the kind has none
  std::vector<std::map<std::string, Tensor>> layers; // composite ground truth
};

Corpus read_corpus(const std::string& dir);

}  // namespace layerforge::authoring
