#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "layerforge/authoring.hpp"
#include "layerforge/error.hpp"
#include "layerforge/image_io.hpp"
#include "layerforge/pyramid.hpp"
#include "test_util.hpp"

using namespace layerforge;
using namespace layerforge::authoring;
namespace fs = std::filesystem;

namespace {

std::string tmp_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "layerforge_authoring_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

std::vector<unsigned char> file_bytes(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  REQUIRE(is.good());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

// brute-force least-squares plane fit a*x + b*y + c per channel via the 3x3
// normal equations, solved with Cramer's rule
Tensor plane_removal_oracle(const Tensor& img) {
  int h = img.extent(0), w = img.extent(1), c = img.extent(2);
  Tensor out({h, w, c});
  for (int ch = 0; ch < c; ++ch) {
    double sxx = 0, sxy = 0, sx = 0, syy = 0, sy = 0, s1 = 0;
    double bx = 0, by = 0, b1 = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = img.at3(y, x, ch);
        sxx += double(x) * x; sxy += double(x) * y; sx += x;
        syy += double(y) * y; sy += y; s1 += 1;
        bx += v * x; by += v * y; b1 += v;
      }
    double m[3][3] = {{sxx, sxy, sx}, {sxy, syy, sy}, {sx, sy, s1}};
    double rhs[3] = {bx, by, b1};
    double det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                 m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                 m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    auto solve = [&](int col) {
      double t[3][3];
      for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) t[i][j] = j == col ? rhs[i] : m[i][j];
      return (t[0][0] * (t[1][1] * t[2][2] - t[1][2] * t[2][1]) -
              t[0][1] * (t[1][0] * t[2][2] - t[1][2] * t[2][0]) +
              t[0][2] * (t[1][0] * t[2][1] - t[1][1] * t[2][0])) /
             det;
    };
    double a = solve(0), b = solve(1), c0 = solve(2);
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double v = img.at3(y, x, ch) - (a * x + b * y + c0) + 0.5;
        out.at3(y, x, ch) = static_cast<real>(std::clamp(v, 0.0, 1.0));
      }
  }
  return out;
}

std::set<std::array<long, 3>> distinct_colors(const Tensor& img) {
  std::set<std::array<long, 3>> colors;
  for (int y = 0; y < img.extent(0); ++y)
    for (int x = 0; x < img.extent(1); ++x) {
      colors.insert({std::lround(img.at3(y, x, 0) * 1e9), std::lround(img.at3(y, x, 1) * 1e9),
                     std::lround(img.at3(y, x, 2) * 1e9)});
    }
  return colors;
}

double band_energy(const Tensor& level) {
  double e = 0;
  for (std::size_t i = 0; i < level.size(); ++i) e += double(level.data()[i]) * level.data()[i];
  return e;
}

}  // namespace

TEST_SUITE("authoring") {

TEST_CASE("remove_gradient matches the normal-equations oracle") {
  Tensor img = testutil::random_tensor({13, 17, 3}, 5, 0.0, 1.0);
  for (int y = 0; y < 13; ++y)
    for (int x = 0; x < 17; ++x)
      for (int c = 0; c < 3; ++c)
        img.at3(y, x, c) = real(0.3 * img.at3(y, x, c) + 0.35 + 0.01 * x - 0.008 * y);
  Tensor got = remove_gradient(img);
  Tensor want = plane_removal_oracle(img);
  CHECK(max_abs(sub(got, want)) < real(1e-9));
}

TEST_CASE("remove_gradient flattens a pure plane to constant 0.5") {
  Tensor img({9, 11, 1});
  for (int y = 0; y < 9; ++y)
    for (int x = 0; x < 11; ++x) img.at3(y, x, 0) = real(0.1 + 0.02 * x + 0.03 * y);
  Tensor flat = remove_gradient(img);
  for (std::size_t i = 0; i < flat.size(); ++i) CHECK(flat.data()[i] == doctest::Approx(0.5).epsilon(1e-10));
}

TEST_CASE("mondrians use exactly two palette colors") {
  const auto& palette = default_palette();
  std::set<std::array<long, 3>> palette_keys;
  for (const auto& c : palette)
    palette_keys.insert({std::lround(real(c[0]) * 1e9), std::lround(real(c[1]) * 1e9),
                         std::lround(real(c[2]) * 1e9)});
  for (std::uint64_t seed : {0ull, 1ull, 2ull, 17ull, 999ull}) {
    MondrianSpec spec;
    spec.canvas = 64;
    spec.seed = seed;
    Tensor img = gen_mondrian(spec);
    auto colors = distinct_colors(img);
    REQUIRE(colors.size() == 2);
    for (const auto& c : colors) CHECK(palette_keys.count(c) == 1);
  }
}

TEST_CASE("mondrians are deterministic in the seed") {
  MondrianSpec spec;
  spec.canvas = 48;
  spec.seed = 11;
  Tensor a = gen_mondrian(spec);
  Tensor b = gen_mondrian(spec);
  CHECK(max_abs(sub(a, b)) == real(0));
  spec.seed = 12;
  Tensor c = gen_mondrian(spec);
  CHECK(max_abs(sub(a, c)) > real(0));
}

TEST_CASE("mondrian polygons cover at least a few pixels") {
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    MondrianSpec spec;
    spec.canvas = 64;
    spec.seed = seed;
    Tensor img = gen_mondrian(spec);
    std::array<real, 3> corner{img.at3(0, 0, 0), img.at3(0, 0, 1), img.at3(0, 0, 2)};
    int fg = 0;
    for (int y = 0; y < 64; ++y)
      for (int x = 0; x < 64; ++x)
        if (img.at3(y, x, 0) != corner[0] || img.at3(y, x, 1) != corner[1] ||
            img.at3(y, x, 2) != corner[2])
          ++fg;
    CHECK(fg >= 4);
    CHECK(fg <= 64 * 64 - 4);
  }
}

TEST_CASE("sphere under head-on light peaks at exactly one") {
  ShadingSpec spec;
  spec.primitive = Primitive::sphere;
  spec.light = {0.0, 0.0, 1.0};
  spec.size = 65;  // odd size puts a pixel at the exact center
  ShadedPrimitive sp = render_shading(spec);
  CHECK(sp.image.at3(32, 32, 0) == real(1));
  CHECK(sp.mask.at3(32, 32, 0) == real(1));
  CHECK(sp.mask.at3(0, 0, 0) == real(0));
  CHECK(sp.image.at3(0, 0, 0) == real(spec.fill));
  real lo = real(1), hi = real(0);
  for (int y = 0; y < 65; ++y)
    for (int x = 0; x < 65; ++x) {
      lo = std::min(lo, sp.image.at3(y, x, 0));
      hi = std::max(hi, sp.image.at3(y, x, 0));
      CHECK(sp.image.at3(y, x, 0) == sp.image.at3(y, x, 1));
      CHECK(sp.image.at3(y, x, 0) == sp.image.at3(y, x, 2));
    }
  CHECK(lo >= real(spec.fill));
  CHECK(hi <= real(1));
}

TEST_CASE("oblique light keeps the fill floor as the minimum") {
  ShadingSpec spec;
  spec.primitive = Primitive::sphere;
  spec.light = {0.7, -0.3, 0.5};
  spec.size = 64;
  ShadedPrimitive sp = render_shading(spec);
  real lo = real(1);
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      if (sp.mask.at3(y, x, 0) > real(0.5)) lo = std::min(lo, sp.image.at3(y, x, 0));
  CHECK(lo >= real(spec.fill));
  CHECK(lo == doctest::Approx(spec.fill).epsilon(1e-6));  // some normal faces away
}

TEST_CASE("cylinder shading is constant along its axis") {
  ShadingSpec spec;
  spec.primitive = Primitive::cylinder;
  spec.light = {0.3, 0.2, 0.93};
  spec.orientation = 0.0;  // axis along +x
  spec.size = 65;
  ShadedPrimitive sp = render_shading(spec);
  for (int y = 0; y < 65; ++y) {
    for (int x = 1; x < 65; ++x) {
      if (sp.mask.at3(y, x, 0) > real(0.5) && sp.mask.at3(y, x - 1, 0) > real(0.5)) {
        CHECK(sp.image.at3(y, x, 0) == doctest::Approx(sp.image.at3(y, x - 1, 0)).epsilon(1e-12));
      }
    }
  }
}

TEST_CASE("beveled box has a flat lit top") {
  ShadingSpec spec;
  spec.primitive = Primitive::box;
  spec.light = {0.0, 0.0, 1.0};
  spec.size = 65;
  ShadedPrimitive sp = render_shading(spec);
  CHECK(sp.image.at3(32, 32, 0) == real(1));
  int below_top = 0;
  for (int y = 0; y < 65; ++y)
    for (int x = 0; x < 65; ++x)
      if (sp.mask.at3(y, x, 0) > real(0.5) && sp.image.at3(y, x, 0) < real(1)) ++below_top;
  CHECK(below_top > 0);  // the bevel band is visible
}

TEST_CASE("blend mask is the union of sphere and cylinder masks") {
  ShadingSpec spec;
  spec.size = 64;
  spec.orientation = 0.7;
  spec.primitive = Primitive::sphere;
  Tensor ms = render_shading(spec).mask;
  spec.primitive = Primitive::cylinder;
  Tensor mc = render_shading(spec).mask;
  spec.primitive = Primitive::blend;
  Tensor mb = render_shading(spec).mask;
  for (int y = 0; y < 64; ++y)
    for (int x = 0; x < 64; ++x)
      CHECK(mb.at3(y, x, 0) == std::max(ms.at3(y, x, 0), mc.at3(y, x, 0)));
}

TEST_CASE("detail textures are centered at one half") {
  for (Texture tex : {Texture::bump_noise, Texture::ripple, Texture::crease}) {
    DetailSpec spec;
    spec.texture = tex;
    spec.size = 64;
    spec.seed = 21;
    Tensor img = gen_detail(spec);
    CHECK(mean(img) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(max_abs(img) <= real(1));
    real lo = real(1);
    for (std::size_t i = 0; i < img.size(); ++i) lo = std::min(lo, img.data()[i]);
    CHECK(lo >= real(0));
  }
}

TEST_CASE("detail energy lives above the coarsest band") {
  for (Texture tex : {Texture::bump_noise, Texture::ripple, Texture::crease}) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      DetailSpec spec;
      spec.texture = tex;
      spec.size = 128;
      spec.seed = seed;
      Tensor img = gen_detail(spec);
      auto pyr = pyramid::build_pyramid(img, 5);
      double total = 0;
      for (int l = 0; l + 1 < 5; ++l) total += band_energy(pyr.levels[static_cast<std::size_t>(l)]);
      double coarsest = band_energy(pyr.levels[3]);
      REQUIRE(total > 0);
      CHECK(coarsest / total <= 0.10);
    }
  }
}

TEST_CASE("compose multiplies layers elementwise") {
  Tensor a = testutil::random_tensor({6, 5, 3}, 1, 0.2, 0.9);
  Tensor s = testutil::random_tensor({6, 5, 3}, 2, 0.2, 0.9);
  Tensor d = testutil::random_tensor({6, 5, 3}, 3, 0.3, 0.8);
  Tensor two = compose(a, s);
  Tensor three = compose(a, s, d);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(two.data()[i] == doctest::Approx(a.data()[i] * s.data()[i]).epsilon(1e-12));
    CHECK(three.data()[i] ==
          doctest::Approx(a.data()[i] * s.data()[i] * d.data()[i]).epsilon(1e-12));
  }
  Tensor wrong({5, 6, 3});
  CHECK_THROWS_AS(compose(a, wrong), DimensionError);
}

TEST_CASE("crops are deterministic and preserve pixel values") {
  Tensor img = testutil::random_tensor({20, 24, 3}, 8, 0.0, 1.0);
  Tensor c1 = crop_augment(img, 10, 77);
  Tensor c2 = crop_augment(img, 10, 77);
  REQUIRE(c1.shape() == std::vector<int>{10, 10, 3});
  CHECK(max_abs(sub(c1, c2)) == real(0));

  CropParams p = sample_crop(20, 24, 10, 77);
  Tensor window = apply_crop(img, CropParams{p.y0, p.x0, 0, false}, 10);
  std::multiset<real> a(window.data(), window.data() + window.size());
  std::multiset<real> b(c1.data(), c1.data() + c1.size());
  CHECK(a == b);  // rotation and flip only permute the window
}

TEST_CASE("half-turn crop reverses the window") {
  Tensor img({4, 4, 1});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) img.at3(y, x, 0) = real(y * 4 + x);
  Tensor rot = apply_crop(img, CropParams{0, 0, 2, false}, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(rot.at3(y, x, 0) == img.at3(3 - y, 3 - x, 0));
  Tensor flip = apply_crop(img, CropParams{0, 0, 0, true}, 4);
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) CHECK(flip.at3(y, x, 0) == img.at3(y, 3 - x, 0));
}

TEST_CASE("quarter-turn crops are rotations of each other") {
  Tensor img({5, 5, 1});
  for (int y = 0; y < 5; ++y)
    for (int x = 0; x < 5; ++x) img.at3(y, x, 0) = real(y * 5 + x);
  Tensor r1 = apply_crop(img, CropParams{0, 0, 1, false}, 5);
  Tensor r2 = apply_crop(r1, CropParams{0, 0, 1, false}, 5);
  Tensor half = apply_crop(img, CropParams{0, 0, 2, false}, 5);
  CHECK(max_abs(sub(r2, half)) == real(0));
}

TEST_CASE("masked crops respect the coverage floor") {
  ShadingSpec spec;
  spec.size = 64;
  ShadedPrimitive sp = render_shading(spec);
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    CropParams p = sample_crop(64, 64, 16, seed, sp.mask, 0.8);
    double inside = 0;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x)
        inside += sp.mask.at3(p.y0 + y, p.x0 + x, 0) > real(0.5) ? 1 : 0;
    CHECK(inside / 256.0 >= 0.8);
  }
}

TEST_CASE("apply_crop rejects out-of-range windows") {
  Tensor img({8, 8, 1});
  CHECK_THROWS_AS(apply_crop(img, CropParams{4, 4, 0, false}, 8), DimensionError);
  CHECK_THROWS_AS(sample_crop(8, 8, 16, 0), DimensionError);
}

TEST_CASE("composite corpus round trips and recomposes") {
  std::string dir = tmp_dir("composite");
  CorpusOptions opt;
  opt.kind = "composite";
  opt.n = 2;
  opt.size = 32;
  opt.seed = 5;
  opt.with_detail = true;
  write_corpus(dir, opt);
  Corpus corpus = read_corpus(dir);
  CHECK(corpus.kind == "composite");
  REQUIRE(corpus.images.size() == 2);
  REQUIRE(corpus.masks.size() == 2);
  REQUIRE(corpus.layers.size() == 2);
  for (int i = 0; i < 2; ++i) {
    const auto& layers = corpus.layers[static_cast<std::size_t>(i)];
    REQUIRE(layers.count("albedo") == 1);
    REQUIRE(layers.count("shading") == 1);
    REQUIRE(layers.count("detail") == 1);
    Tensor recomposed =
        compose(layers.at("albedo"), layers.at("shading"), layers.at("detail"));
    CHECK(max_abs(sub(recomposed, corpus.images[static_cast<std::size_t>(i)])) < real(1e-12));
  }
}

TEST_CASE("corpus generation is reproducible byte for byte") {
  std::string d1 = tmp_dir("rep1");
  std::string d2 = tmp_dir("rep2");
  CorpusOptions opt;
  opt.kind = "shading";
  opt.n = 3;
  opt.size = 32;
  opt.seed = 9;
  write_corpus(d1, opt);
  write_corpus(d2, opt);
  for (const char* name : {"corpus.json", "im_0000.png", "im_0002.png", "mask_0001.png"}) {
    CHECK(file_bytes(fs::path(d1) / name) == file_bytes(fs::path(d2) / name));
  }
}

TEST_CASE("mondrian corpus has no masks or layers") {
  std::string dir = tmp_dir("mondrian");
  CorpusOptions opt;
  opt.kind = "mondrian";
  opt.n = 3;
  opt.size = 24;
  opt.seed = 2;
  write_corpus(dir, opt);
  Corpus corpus = read_corpus(dir);
  REQUIRE(corpus.images.size() == 3);
  CHECK(corpus.masks.empty());
  for (const auto& l : corpus.layers) CHECK(l.empty());
  auto colors = distinct_colors(corpus.images[0]);
  CHECK(colors.size() == 2);
}

TEST_CASE("write_corpus rejects bad options") {
  CorpusOptions opt;
  opt.kind = "nonsense";
  opt.n = 1;
  CHECK_THROWS_AS(write_corpus(tmp_dir("bad"), opt), ConfigError);
  opt.kind = "mondrian";
  opt.n = 0;
  CHECK_THROWS_AS(write_corpus(tmp_dir("bad"), opt), ConfigError);
}

}
