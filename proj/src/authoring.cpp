#include "layerforge/authoring.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "layerforge/image_io.hpp"
#include "layerforge/ops.hpp"
#include "layerforge/rng.hpp"

namespace layerforge::authoring {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr double kPi = 3.14159265358979323846;

std::array<double, 3> hsv_to_rgb(double h, double s, double v) {
  double r = v, g = v, b = v;
  double i = std::floor(h * 6.0);
  double f = h * 6.0 - i;
  double p = v * (1.0 - s);
  double q = v * (1.0 - s * f);
  double t = v * (1.0 - s * (1.0 - f));
  switch (static_cast<int>(i) % 6) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    case 5: r = v; g = p; b = q; break;
  }
  return {r, g, b};
}

}  // namespace

const std::array<std::array<double, 3>, 16>& default_palette() {
  static const std::array<std::array<double, 3>, 16> palette = [] {
    std::array<std::array<double, 3>, 16> p{};
    for (int i = 0; i < 16; ++i) p[static_cast<std::size_t>(i)] = hsv_to_rgb(i / 16.0, 0.7, 0.85);
    return p;
  }();
  return palette;
}

Tensor gen_mondrian(const MondrianSpec& spec) {
  if (spec.canvas < 8) throw ConfigError("gen_mondrian: canvas too small");
  if (spec.min_vertices < 3 || spec.max_vertices < spec.min_vertices) {
    throw ConfigError("gen_mondrian: bad vertex range");
  }
  Rng rng(spec.seed);
  const auto& palette = default_palette();
  int bg_idx = rng.uniform_int(16);
  int fg_idx = (bg_idx + 1 + rng.uniform_int(15)) % 16;
  const auto& bg = palette[static_cast<std::size_t>(bg_idx)];
  const auto& fg = palette[static_cast<std::size_t>(fg_idx)];

  int S = spec.canvas;
  double cx = (S - 1) / 2.0, cy = (S - 1) / 2.0;

  std::vector<double> px, py;
  for (int attempt = 0;; ++attempt) {
    if (attempt >= 100) throw ConfigError("gen_mondrian: degenerate polygon after 100 attempts");
    int n = spec.min_vertices + rng.uniform_int(spec.max_vertices - spec.min_vertices + 1);
    std::vector<double> angles(static_cast<std::size_t>(n));
    for (auto& a : angles) a = rng.uniform(0.0, 2.0 * kPi);
    std::sort(angles.begin(), angles.end());
    px.clear();
    py.clear();
    for (double a : angles) {
      double r = rng.uniform(0.15, 0.45) * S;
      px.push_back(cx + r * std::cos(a));
      py.push_back(cy + r * std::sin(a));
    }
    double area2 = 0;
    for (std::size_t i = 0; i < px.size(); ++i) {
      std::size_t j = (i + 1) % px.size();
      area2 += px[i] * py[j] - px[j] * py[i];
    }
    if (std::abs(area2) * 0.5 >= 4.0) break;  // at least a few pixels
  }

  Tensor img({S, S, 3});
  for (int y = 0; y < S; ++y)
    for (int x = 0; x < S; ++x)
      for (int c = 0; c < 3; ++c)
        img.at3(y, x, c) = static_cast<real>(bg[static_cast<std::size_t>(c)]);

  // even-odd scanline fill at pixel centers, no anti-aliasing
  std::vector<double> xs;
  for (int y = 0; y < S; ++y) {
    double yc = y + 0.5;
    xs.clear();
    for (std::size_t i = 0; i < px.size(); ++i) {
      std::size_t j = (i + 1) % px.size();
      double y1 = py[i], y2 = py[j];
      if ((y1 <= yc) == (y2 <= yc)) continue;
      xs.push_back(px[i] + (yc - y1) * (px[j] - px[i]) / (y2 - y1));
    }
    std::sort(xs.begin(), xs.end());
    for (std::size_t i = 0; i + 1 < xs.size(); i += 2) {
      int x0 = static_cast<int>(std::ceil(xs[i] - 0.5));
      int x1 = static_cast<int>(std::ceil(xs[i + 1] - 0.5)) - 1;
      x0 = std::max(x0, 0);
      x1 = std::min(x1, S - 1);
      for (int x = x0; x <= x1; ++x)
        for (int c = 0; c < 3; ++c)
          img.at3(y, x, c) = static_cast<real>(fg[static_cast<std::size_t>(c)]);
    }
  }
  return img;
}

namespace {

struct Surface {
  bool hit = false;
  double nx = 0, ny = 0, nz = 1;
};

Surface sphere_at(double dx, double dy, double radius) {
  Surface s;
  double u = dx / radius, v = dy / radius;
  double rr = u * u + v * v;
  if (rr > 1.0) return s;
  s.hit = true;
  s.nx = u;
  s.ny = v;
  s.nz = std::sqrt(1.0 - rr);
  return s;
}

Surface cylinder_at(double dx, double dy, double radius, double half_len, double theta) {
  Surface s;
  double ax = std::cos(theta), ay = std::sin(theta);
  double along = dx * ax + dy * ay;
  double across = -dx * ay + dy * ax;
  if (std::abs(along) > half_len || std::abs(across) > radius) return s;
  double u = across / radius;
  s.hit = true;
  s.nx = -ay * u;
  s.ny = ax * u;
  s.nz = std::sqrt(1.0 - u * u);
  return s;
}

Surface box_at(double dx, double dy, double half, double bevel, double theta) {
  Surface s;
  double ct = std::cos(theta), st = std::sin(theta);
  double bx = dx * ct + dy * st;
  double by = -dx * st + dy * ct;
  double m = std::max(std::abs(bx), std::abs(by));
  if (m > half) return s;
  s.hit = true;
  if (m <= half - bevel) return s;  // flat top, n = +z
  double inv = std::sqrt(0.5);
  double nx, ny;
  if (std::abs(bx) >= std::abs(by)) {
    nx = bx > 0 ? inv : -inv;
    ny = 0;
  } else {
    nx = 0;
    ny = by > 0 ? inv : -inv;
  }
  s.nx = nx * ct - ny * st;
  s.ny = nx * st + ny * ct;
  s.nz = inv;
  return s;
}

}  // namespace

ShadedPrimitive render_shading(const ShadingSpec& spec) {
  if (spec.size < 8) throw ConfigError("render_shading: size too small");
  if (spec.fill < 0 || spec.fill >= 1) throw ConfigError("render_shading: fill must be in [0, 1)");
  double lx = spec.light[0], ly = spec.light[1], lz = spec.light[2];
  double norm = std::sqrt(lx * lx + ly * ly + lz * lz);
  if (norm <= 0) throw ConfigError("render_shading: zero light direction");
  lx /= norm;
  ly /= norm;
  lz /= norm;

  int S = spec.size;
  double c = (S - 1) / 2.0;
  ShadedPrimitive out;
  out.image = Tensor({S, S, 3});
  out.mask = Tensor({S, S, 1});

  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      double dx = x - c, dy = y - c;
      double raw = 0;
      bool hit = false;
      switch (spec.primitive) {
        case Primitive::sphere: {
          Surface s = sphere_at(dx, dy, 0.42 * S);
          hit = s.hit;
          if (hit) raw = s.nx * lx + s.ny * ly + s.nz * lz;
          break;
        }
        case Primitive::cylinder: {
          Surface s = cylinder_at(dx, dy, 0.30 * S, 0.40 * S, spec.orientation);
          hit = s.hit;
          if (hit) raw = s.nx * lx + s.ny * ly + s.nz * lz;
          break;
        }
        case Primitive::box: {
          Surface s = box_at(dx, dy, 0.38 * S, 0.12 * S, spec.orientation);
          hit = s.hit;
          if (hit) raw = s.nx * lx + s.ny * ly + s.nz * lz;
          break;
        }
        case Primitive::blend: {
          Surface a = sphere_at(dx, dy, 0.42 * S);
          Surface b = cylinder_at(dx, dy, 0.30 * S, 0.40 * S, spec.orientation);
          hit = a.hit || b.hit;
          double ra = a.hit ? a.nx * lx + a.ny * ly + a.nz * lz : 0.0;
          double rb = b.hit ? b.nx * lx + b.ny * ly + b.nz * lz : 0.0;
          if (a.hit && b.hit) raw = spec.blend_mix * ra + (1.0 - spec.blend_mix) * rb;
          else raw = a.hit ? ra : rb;
          break;
        }
      }
      double intensity = spec.fill;
      if (hit) intensity = std::max(raw, 0.0) * (1.0 - spec.fill) + spec.fill;
      for (int ch = 0; ch < 3; ++ch) out.image.at3(y, x, ch) = static_cast<real>(intensity);
      out.mask.at3(y, x, 0) = hit ? real(1) : real(0);
    }
  }
  return out;
}

Tensor gen_shading(const ShadingSpec& spec) { return render_shading(spec).image; }

namespace {

double lattice_value(std::uint64_t seed, int ix, int iy) {
  std::uint64_t h = mix_seed(seed, 101,
                             static_cast<std::uint64_t>(ix) * 0x9E3779B9u +
                                 static_cast<std::uint64_t>(iy) * 0x85EBCA6Bu + (1ull << 32));
  return 2.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 1.0;
}

double smoothstep(double t) { return t * t * (3.0 - 2.0 * t); }

double value_noise(std::uint64_t seed, double x, double y, double cell) {
  double gx = x / cell, gy = y / cell;
  int ix = static_cast<int>(std::floor(gx)), iy = static_cast<int>(std::floor(gy));
  double fx = smoothstep(gx - ix), fy = smoothstep(gy - iy);
  double v00 = lattice_value(seed, ix, iy);
  double v10 = lattice_value(seed, ix + 1, iy);
  double v01 = lattice_value(seed, ix, iy + 1);
  double v11 = lattice_value(seed, ix + 1, iy + 1);
  double a = v00 + (v10 - v00) * fx;
  double b = v01 + (v11 - v01) * fx;
  return a + (b - a) * fy;
}

}  // namespace

Tensor gen_detail(const DetailSpec& spec) {
  if (spec.size < 8) throw ConfigError("gen_detail: size too small");
  if (spec.scale <= 0) throw ConfigError("gen_detail: scale must be positive");
  int S = spec.size;
  Rng rng(spec.seed);
  double theta = rng.uniform(0.0, kPi);
  double phase = rng.uniform(0.0, 2.0 * kPi);
  Tensor img({S, S, 3});
  for (int y = 0; y < S; ++y) {
    for (int x = 0; x < S; ++x) {
      double f = 0;
      switch (spec.texture) {
        case Texture::bump_noise:
          f = (value_noise(spec.seed, x, y, spec.scale) +
               0.5 * value_noise(spec.seed + 1, x, y, spec.scale * 0.5)) /
              1.5;
          break;
        case Texture::ripple: {
          double t = x * std::cos(theta) + y * std::sin(theta);
          f = std::sin(2.0 * kPi * t / spec.scale + phase);
          break;
        }
        case Texture::crease: {
          double t = (x * std::cos(theta) + y * std::sin(theta)) / spec.scale + phase;
          double s = t - std::floor(t);
          f = 4.0 * std::abs(s - 0.5) - 1.0;
          break;
        }
      }
      real v = static_cast<real>(0.5 + spec.amplitude * f);
      for (int c = 0; c < 3; ++c) img.at3(y, x, c) = v;
    }
  }
  return remove_gradient(img);
}

Tensor remove_gradient(const Tensor& image) {
  require_rank(image, 3, "remove_gradient");
  int h = image.extent(0), w = image.extent(1), c = image.extent(2);
  Tensor out({h, w, c});
  double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  double sxx = 0, syy = 0;
  for (int x = 0; x < w; ++x) sxx += (x - cx) * (x - cx);
  for (int y = 0; y < h; ++y) syy += (y - cy) * (y - cy);
  sxx *= h;
  syy *= w;
  for (int ch = 0; ch < c; ++ch) {
    double sx = 0, sy = 0, s0 = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = image.at3(y, x, ch);
        sx += v * (x - cx);
        sy += v * (y - cy);
        s0 += v;
      }
    double a = sxx > 0 ? sx / sxx : 0.0;
    double b = syy > 0 ? sy / syy : 0.0;
    double mean_v = s0 / (h * w);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = image.at3(y, x, ch) - (a * (x - cx) + b * (y - cy) + mean_v) + 0.5;
        out.at3(y, x, ch) = static_cast<real>(std::clamp(v, 0.0, 1.0));
      }
  }
  return out;
}

namespace {

Tensor compose_logs(const std::vector<const Tensor*>& layers) {
  for (std::size_t i = 1; i < layers.size(); ++i) {
    if (!layers[i]->same_shape(*layers[0])) throw DimensionError("compose: layer shape mismatch");
  }
  Tensor acc = to_log_domain(*layers[0]);
  for (std::size_t i = 1; i < layers.size(); ++i) acc = add(acc, to_log_domain(*layers[i]));
  return to_linear_domain(acc);
}

}  // namespace

Tensor compose(const Tensor& albedo, const Tensor& shading) {
  return compose_logs({&albedo, &shading});
}

Tensor compose(const Tensor& albedo, const Tensor& shading, const Tensor& detail) {
  return compose_logs({&albedo, &shading, &detail});
}

CropParams sample_crop(int h, int w, int patch, std::uint64_t seed) {
  if (patch > h || patch > w) throw DimensionError("sample_crop: patch larger than image");
  Rng rng(seed);
  CropParams p;
  p.y0 = rng.uniform_int(h - patch + 1);
  p.x0 = rng.uniform_int(w - patch + 1);
  p.rotation = rng.uniform_int(4);
  p.flip = rng.uniform_int(2) == 1;
  return p;
}

CropParams sample_crop(int h, int w, int patch, std::uint64_t seed, const Tensor& mask,
                       double min_in_mask) {
  if (patch > h || patch > w) throw DimensionError("sample_crop: patch larger than image");
  Rng rng(seed);
  CropParams best;
  double best_cover = -1.0;
  for (int attempt = 0; attempt < 100; ++attempt) {
    CropParams p;
    p.y0 = rng.uniform_int(h - patch + 1);
    p.x0 = rng.uniform_int(w - patch + 1);
    p.rotation = rng.uniform_int(4);
    p.flip = rng.uniform_int(2) == 1;
    double inside = 0;
    for (int y = 0; y < patch; ++y)
      for (int x = 0; x < patch; ++x) inside += mask.at3(p.y0 + y, p.x0 + x, 0) > real(0.5) ? 1 : 0;
    double cover = inside / (static_cast<double>(patch) * patch);
    if (cover > best_cover) {
      best_cover = cover;
      best = p;
    }
    if (cover >= min_in_mask) return p;
  }
  return best;
}

Tensor apply_crop(const Tensor& image, const CropParams& p, int patch) {
  require_rank(image, 3, "apply_crop");
  if (p.y0 < 0 || p.x0 < 0 || p.y0 + patch > image.extent(0) || p.x0 + patch > image.extent(1)) {
    throw DimensionError("apply_crop: window outside image");
  }
  int c = image.extent(2);
  Tensor out({patch, patch, c});
  for (int y = 0; y < patch; ++y) {
    for (int x = 0; x < patch; ++x) {
      int sy = y, sx = x;
      switch (p.rotation & 3) {  // inverse quarter-turn mapping
        case 0: break;
        case 1: sy = patch - 1 - x; sx = y; break;
        case 2: sy = patch - 1 - y; sx = patch - 1 - x; break;
        case 3: sy = x; sx = patch - 1 - y; break;
      }
      if (p.flip) sx = patch - 1 - sx;
      for (int ch = 0; ch < c; ++ch)
        out.at3(y, x, ch) = image.at3(p.y0 + sy, p.x0 + sx, ch);
    }
  }
  return out;
}

Tensor crop_augment(const Tensor& image, int patch, std::uint64_t seed) {
  return apply_crop(image, sample_crop(image.extent(0), image.extent(1), patch, seed), patch);
}

Tensor crop_augment(const Tensor& image, const Tensor& mask, int patch, std::uint64_t seed,
                    double min_in_mask) {
  return apply_crop(
      image, sample_crop(image.extent(0), image.extent(1), patch, seed, mask, min_in_mask), patch);
}

namespace {

std::string index_name(const char* prefix, int i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%04d.%s", prefix, i, ext);
  return buf;
}

const char* primitive_name(Primitive p) {
  switch (p) {
    case Primitive::sphere: return "sphere";
    case Primitive::cylinder: return "cylinder";
    case Primitive::box: return "box";
    case Primitive::blend: return "blend";
  }
  return "sphere";
}

const char* texture_name(Texture t) {
  switch (t) {
    case Texture::bump_noise: return "bump_noise";
    case Texture::ripple: return "ripple";
    case Texture::crease: return "crease";
  }
  return "bump_noise";
}

ShadingSpec sample_shading_spec(std::uint64_t seed, int i, int size) {
  Rng rng(mix_seed(seed, RngStream::corpus, 2000 + static_cast<std::uint64_t>(i)));
  ShadingSpec spec;
  const Primitive prims[4] = {Primitive::sphere, Primitive::cylinder, Primitive::box,
                              Primitive::blend};
  spec.primitive = prims[i % 4];
  double cos_t = rng.uniform(0.5, 1.0);
  double sin_t = std::sqrt(1.0 - cos_t * cos_t);
  double az = rng.uniform(0.0, 2.0 * kPi);
  spec.light = {sin_t * std::cos(az), sin_t * std::sin(az), cos_t};
  spec.orientation = rng.uniform(0.0, kPi);
  spec.blend_mix = rng.uniform(0.3, 0.7);
  spec.fill = 0.10;
  spec.size = size;
  return spec;
}

DetailSpec sample_detail_spec(std::uint64_t seed, int i, int size) {
  Rng rng(mix_seed(seed, RngStream::corpus, 3000 + static_cast<std::uint64_t>(i)));
  DetailSpec spec;
  const Texture tex[3] = {Texture::bump_noise, Texture::ripple, Texture::crease};
  spec.texture = tex[i % 3];
  spec.amplitude = rng.uniform(0.10, 0.30);
  spec.scale = rng.uniform(4.0, 10.0);
  spec.size = size;
  spec.seed = mix_seed(seed, RngStream::corpus, 3500 + static_cast<std::uint64_t>(i));
  return spec;
}

json shading_spec_json(const ShadingSpec& s) {
  return json{{"primitive", primitive_name(s.primitive)},
              {"light", {s.light[0], s.light[1], s.light[2]}},
              {"fill", s.fill},
              {"orientation", s.orientation},
              {"blend_mix", s.blend_mix},
              {"size", s.size}};
}

json detail_spec_json(const DetailSpec& s) {
  return json{{"texture", texture_name(s.texture)}, {"amplitude", s.amplitude},
              {"scale", s.scale},                   {"size", s.size},
              {"seed", s.seed}};
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os << j.dump(2) << "\n";
}

}  // namespace

void write_corpus(const std::string& dir, const CorpusOptions& opt) {
  if (opt.n < 1) throw ConfigError("write_corpus: n must be >= 1");
  if (opt.kind != "mondrian" && opt.kind != "shading" && opt.kind != "detail" &&
      opt.kind != "composite") {
    throw ConfigError("write_corpus: unknown kind " + opt.kind);
  }
  fs::create_directories(dir);
  json manifest{{"kind", opt.kind},
                {"n", opt.n},
                {"size", opt.size},
                {"seed", opt.seed},
                {"with_detail", opt.with_detail}};
  json items = json::array();

  for (int i = 0; i < opt.n; ++i) {
    json item;
    std::string image_name = index_name("im", i, "png");
    item["image"] = image_name;
    if (opt.kind == "mondrian") {
      MondrianSpec spec;
      spec.canvas = opt.size;
      spec.seed = mix_seed(opt.seed, RngStream::corpus, static_cast<std::uint64_t>(i));
      io::write_png16(fs::path(dir) / image_name, gen_mondrian(spec));
      item["spec"] = json{{"canvas", spec.canvas},
                          {"min_vertices", spec.min_vertices},
                          {"max_vertices", spec.max_vertices},
                          {"seed", spec.seed}};
    } else if (opt.kind == "shading") {
      ShadingSpec spec = sample_shading_spec(opt.seed, i, opt.size);
      ShadedPrimitive sp = render_shading(spec);
      io::write_png16(fs::path(dir) / image_name, sp.image);
      std::string mask_name = index_name("mask", i, "png");
      io::write_png16(fs::path(dir) / mask_name, sp.mask);
      item["mask"] = mask_name;
      item["spec"] = shading_spec_json(spec);
    } else if (opt.kind == "detail") {
      DetailSpec spec = sample_detail_spec(opt.seed, i, opt.size);
      io::write_png16(fs::path(dir) / image_name, gen_detail(spec));
      item["spec"] = detail_spec_json(spec);
    } else {
      MondrianSpec mspec;
      mspec.canvas = opt.size;
      mspec.seed = mix_seed(opt.seed, RngStream::corpus, 1000 + static_cast<std::uint64_t>(i));
      Tensor albedo = gen_mondrian(mspec);
      ShadingSpec sspec = sample_shading_spec(opt.seed, i, opt.size);
      ShadedPrimitive sp = render_shading(sspec);
      Tensor image;
      json layers;
      auto store = [&](const char* name, const Tensor& t) {
        std::string png = index_name(name, i, "png");
        std::string raw = index_name(name, i, "rawf");
        io::write_png16(fs::path(dir) / png, t);
        io::write_rawf(fs::path(dir) / raw, t);
        layers[name] = json{{"png", png}, {"raw", raw}};
      };
      store("albedo", albedo);
      store("shading", sp.image);
      json spec_j{{"mondrian",
                   json{{"canvas", mspec.canvas},
                        {"min_vertices", mspec.min_vertices},
                        {"max_vertices", mspec.max_vertices},
                        {"seed", mspec.seed}}},
                  {"shading", shading_spec_json(sspec)}};
      if (opt.with_detail) {
        DetailSpec dspec = sample_detail_spec(opt.seed, i, opt.size);
        Tensor detail = gen_detail(dspec);
        store("detail", detail);
        image = compose(albedo, sp.image, detail);
        spec_j["detail"] = detail_spec_json(dspec);
      } else {
        image = compose(albedo, sp.image);
      }
      io::write_png16(fs::path(dir) / image_name, image);
      io::write_rawf(fs::path(dir) / index_name("im", i, "rawf"), image);
      item["image_raw"] = index_name("im", i, "rawf");
      std::string mask_name = index_name("mask", i, "png");
      io::write_png16(fs::path(dir) / mask_name, sp.mask);
      item["mask"] = mask_name;
      item["layers"] = layers;
      item["spec"] = spec_j;
    }
    items.push_back(item);
  }
  manifest["items"] = items;
  write_json(fs::path(dir) / "corpus.json", manifest);
}

Corpus read_corpus(const std::string& dir) {
  std::ifstream is(fs::path(dir) / "corpus.json");
  if (!is) throw IoError("cannot open " + dir + "/corpus.json");
  json manifest = json::parse(is, nullptr, false);
  if (manifest.is_discarded()) throw IoError(dir + "/corpus.json: invalid JSON");
  Corpus corpus;
  corpus.kind = manifest.value("kind", "");
  for (const json& item : manifest.at("items")) {
    if (item.contains("image_raw")) {
      corpus.images.push_back(io::read_rawf(fs::path(dir) / item["image_raw"].get<std::string>()));
    } else {
      corpus.images.push_back(io::read_png(fs::path(dir) / item["image"].get<std::string>()));
    }
    if (item.contains("mask")) {
      corpus.masks.push_back(io::read_png(fs::path(dir) / item["mask"].get<std::string>()));
    }
    std::map<std::string, Tensor> layers;
    if (item.contains("layers")) {
      for (auto it = item["layers"].begin(); it != item["layers"].end(); ++it) {
        layers[it.key()] = io::read_rawf(fs::path(dir) / it.value()["raw"].get<std::string>());
      }
    }
    corpus.layers.push_back(std::move(layers));
  }
  if (!corpus.masks.empty() && corpus.masks.size() != corpus.images.size()) {
    throw IoError(dir + ": mask count does not match image count");
  }
  return corpus;
}

}  // namespace layerforge::authoring
