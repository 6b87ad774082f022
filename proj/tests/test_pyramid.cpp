#include <doctest.h>

#include <cmath>

#include "layerforge/ops.hpp"
#include "layerforge/pyramid.hpp"
#include "test_util.hpp"

using namespace layerforge;
using testutil::random_tensor;

TEST_SUITE("pyramid") {

TEST_CASE("blur matches the separable binomial applied by hand") {
  // Impulse response at the center of a 7x7 single-channel image.
  Tensor x({7, 7, 1});
  x.at3(3, 3, 0) = 1;
  pyramid::Options opt;
  Tensor y = kernels::blur5(x, opt.taps);
  double total = 0;
  for (int dy = -2; dy <= 2; ++dy)
    for (int dx = -2; dx <= 2; ++dx) {
      double expect = opt.taps[static_cast<std::size_t>(dy + 2)] *
                      opt.taps[static_cast<std::size_t>(dx + 2)];
      CHECK(y.at3(3 + dy, 3 + dx, 0) == doctest::Approx(expect).epsilon(1e-12));
      total += y.at3(3 + dy, 3 + dx, 0);
    }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("blur preserves constants under reflect-101") {
  Tensor x = Tensor::full({6, 9, 2}, real(3.5));
  pyramid::Options opt;
  Tensor y = kernels::blur5(x, opt.taps);
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(3.5).epsilon(1e-12));
}

TEST_CASE("reflect-101 borders match an explicitly mirrored image") {
  // Mirroring a row vector by hand: index -1 -> 1, -2 -> 2, n -> n-2, n+1 -> n-3.
  Tensor x({1, 5, 1}, {10, 20, 30, 40, 50});
  pyramid::Options opt;
  Tensor y = kernels::blur5(x, opt.taps);
  auto tap = [&](int i) { return opt.taps[static_cast<std::size_t>(i)]; };
  double left = tap(0) * 30 + tap(1) * 20 + tap(2) * 10 + tap(3) * 20 + tap(4) * 30;
  double right = tap(0) * 30 + tap(1) * 40 + tap(2) * 50 + tap(3) * 40 + tap(4) * 30;
  CHECK(y.at3(0, 0, 0) == doctest::Approx(left).epsilon(1e-12));
  CHECK(y.at3(0, 4, 0) == doctest::Approx(right).epsilon(1e-12));
}

TEST_CASE("level shapes halve and the count is as requested") {
  Tensor img = random_tensor({64, 32, 3}, 5);
  auto pyr = pyramid::build_pyramid(img, 4);
  REQUIRE(pyr.depth() == 4);
  CHECK(pyr.levels[0].shape() == std::vector<int>{64, 32, 3});
  CHECK(pyr.levels[1].shape() == std::vector<int>{32, 16, 3});
  CHECK(pyr.levels[2].shape() == std::vector<int>{16, 8, 3});
  CHECK(pyr.levels[3].shape() == std::vector<int>{8, 4, 3});
}

TEST_CASE("round trip is exact to 1e-6 max abs error") {
  for (int levels : {1, 2, 3, 4}) {
    Tensor img = random_tensor({32, 32, 3}, 50 + static_cast<std::uint64_t>(levels), 0.0, 1.0);
    auto pyr = pyramid::build_pyramid(img, levels);
    Tensor back = pyramid::reconstruct(pyr);
    CHECK(max_abs(sub(img, back)) < 1e-6);
  }
}

TEST_CASE("round trip holds for alternate injected taps") {
  pyramid::Options opt;
  opt.taps = {0.05, 0.25, 0.4, 0.25, 0.05};
  Tensor img = random_tensor({16, 16, 2}, 60);
  auto pyr = pyramid::build_pyramid(img, 3, opt);
  Tensor back = pyramid::reconstruct(pyr, opt);
  CHECK(max_abs(sub(img, back)) < 1e-6);
}

TEST_CASE("band-pass levels of a constant image vanish") {
  Tensor img = Tensor::full({16, 16, 1}, real(0.7));
  auto pyr = pyramid::build_pyramid(img, 3);
  CHECK(max_abs(pyr.levels[0]) < 1e-12);
  CHECK(max_abs(pyr.levels[1]) < 1e-12);
  for (std::size_t i = 0; i < pyr.levels[2].size(); ++i)
    CHECK(pyr.levels[2][i] == doctest::Approx(0.7).epsilon(1e-9));
}

TEST_CASE("indivisible extents are rejected") {
  Tensor img({6, 6, 1});
  CHECK_THROWS_AS(pyramid::build_pyramid(img, 3), DimensionError);
  CHECK_NOTHROW(pyramid::build_pyramid(img, 2));
  CHECK_THROWS_AS(pyramid::build_pyramid(img, 0), ConfigError);
}

TEST_CASE("graph pyramid agrees with the tensor pyramid") {
  Tensor img = random_tensor({16, 16, 2}, 70);
  auto pyr = pyramid::build_pyramid(img, 3);
  Graph g;
  Var v = g.constant(img);
  auto levels = pyramid::build_pyramid(v, 3);
  REQUIRE(levels.size() == 3);
  for (int l = 0; l < 3; ++l) {
    CHECK(max_abs(sub(g.value(levels[static_cast<std::size_t>(l)]),
                      pyr.levels[static_cast<std::size_t>(l)])) == 0);
  }
  Var back = pyramid::reconstruct(levels);
  CHECK(max_abs(sub(g.value(back), img)) < 1e-6);
}

TEST_CASE("graph reconstruct gradients pass finite differences") {
  Tensor l0 = random_tensor({8, 8, 1}, 80);
  Tensor l1 = random_tensor({4, 4, 1}, 81);
  double err = testutil::fd_max_rel_error({l0, l1}, [](Graph&, const std::vector<Var>& v) {
    return sum(square(pyramid::reconstruct({v[0], v[1]})));
  });
  CHECK(err < 1e-6);
}

TEST_CASE("downsample then upsample is linear and shape-correct") {
  Tensor img = random_tensor({10, 14, 1}, 90);
  Tensor low = pyramid::downsample(img);
  CHECK(low.shape() == std::vector<int>{5, 7, 1});
  Tensor up = pyramid::upsample(low, 10, 14);
  CHECK(up.shape() == std::vector<int>{10, 14, 1});
}



TEST_CASE("upsample_field replicates codes to the target size") {
  Tensor one({1, 1, 2});
  one.at3(0, 0, 0) = real(3);
  one.at3(0, 0, 1) = real(-1);
  Tensor up = pyramid::upsample_field(one, 4, 4);
  REQUIRE(up.shape() == std::vector<int>{4, 4, 2});
  for (int y = 0; y < 4; ++y)
    for (int x = 0; x < 4; ++x) {
      CHECK(up.at3(y, x, 0) == real(3));
      CHECK(up.at3(y, x, 1) == real(-1));
    }

  Tensor five = testutil::random_tensor({5, 5, 4}, 3);
  Tensor big = pyramid::upsample_field(five, 13, 13);
  CHECK(big.shape() == std::vector<int>{13, 13, 4});

  Tensor same = pyramid::upsample_field(five, 5, 5);
  CHECK(max_abs(sub(same, five)) == real(0));

  CHECK_THROWS_AS(pyramid::upsample_field(five, 4, 5), DimensionError);
}

}  // TEST_SUITE
