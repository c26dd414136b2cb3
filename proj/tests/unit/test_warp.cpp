/* Copyright 2026 The dwnet Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#include <doctest.h>

#include <cmath>

#include "dwnet/warp.hpp"
#include "gradcheck.hpp"

using namespace dwnet;
using dwnet::testing::random_map;

namespace {

// Grid shifted by (dx, dy) source pixels from the identity.
WarpGridD shifted_grid(int h, int w, int src_h, int src_w, double dx, double dy) {
  WarpGridD g(h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      g.x(i, j) = to_normalized(j + dx, src_w);
      g.y(i, j) = to_normalized(i + dy, src_h);
    }
  return g;
}

// Coordinates that stay clear of pixel centers and of the border, where the
// sampler is not differentiable.
WarpGridD random_smooth_grid(int h, int w, int src_h, int src_w, Rng& rng) {
  WarpGridD g(h, w);
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      auto coord = [&](int size) {
        const double cell = static_cast<double>(rng.uniform_int(0, size - 2));
        return to_normalized(cell + rng.uniform(0.05, 0.95), size);
      };
      g.x(i, j) = coord(src_w);
      g.y(i, j) = coord(src_h);
    }
  return g;
}

}  // namespace

TEST_CASE("identity grid sampling is exact") {
  Rng rng(1);
  for (auto [h, w] : {std::pair{1, 1}, {1, 7}, {5, 1}, {16, 16}, {37, 23}, {64, 64}}) {
    const FeatureMap img = testing::random_mapf(3, h, w, rng);
    CHECK(bilinear_sample(img, identity_grid<float>(h, w)).data == img.data);
    const FeatureMapD imgd = random_map(2, h, w, rng);
    CHECK(bilinear_sample(imgd, identity_grid<double>(h, w)).data == imgd.data);
  }
}

TEST_CASE("identity grid names pixel centers") {
  const WarpGrid g = identity_grid<float>(3, 5);
  CHECK(g.x(0, 0) == -1.f);
  CHECK(g.x(0, 4) == 1.f);
  CHECK(g.x(1, 2) == 0.f);
  CHECK(g.y(2, 0) == 1.f);
  CHECK(to_pixel(to_normalized(3.0, 9), 9) == doctest::Approx(3.0));
  CHECK_THROWS_AS(identity_grid<float>(0, 3), ShapeError);
}

TEST_CASE("integer shifts move pixels and clamp at the border") {
  Rng rng(2);
  const FeatureMapD img = random_map(2, 6, 7, rng);
  const FeatureMapD out = bilinear_sample(img, shifted_grid(6, 7, 6, 7, 2.0, -1.0));
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 7; ++j) {
        const int sx = std::min(j + 2, 6);
        const int sy = std::max(i - 1, 0);
        CHECK(out.at(c, i, j) == doctest::Approx(img.at(c, sy, sx)).epsilon(1e-12));
      }
}

TEST_CASE("half-pixel sample averages neighbors") {
  FeatureMapD img(1, 2, 2);
  img.data = {0.0, 1.0, 2.0, 3.0};
  WarpGridD g(1, 1);
  g.x(0, 0) = 0.0;
  g.y(0, 0) = 0.0;
  CHECK(bilinear_sample(img, g).data[0] == doctest::Approx(1.5));
  g.x(0, 0) = 0.0;
  g.y(0, 0) = -1.0;
  CHECK(bilinear_sample(img, g).data[0] == doctest::Approx(0.5));
  g.x(0, 0) = 5.0;  // far outside: clamps to the right edge
  g.y(0, 0) = -5.0;
  CHECK(bilinear_sample(img, g).data[0] == doctest::Approx(1.0));
}

TEST_CASE("constant images stay constant under any grid") {
  Rng rng(3);
  FeatureMap img(2, 9, 9, 0.25f);
  WarpGrid g(5, 6);
  for (auto& v : g.coords.data) v = static_cast<float>(rng.uniform(-1.5, 1.5));
  for (float v : bilinear_sample(img, g).data) CHECK(v == doctest::Approx(0.25f));
}

TEST_CASE("output takes the grid's spatial size and rejects malformed grids") {
  Rng rng(4);
  const FeatureMap img = testing::random_mapf(3, 16, 16, rng);
  CHECK(bilinear_sample(img, identity_grid<float>(4, 4)).shape_string() == "3x4x4");
  CHECK_THROWS_AS(WarpGrid(FeatureMap(3, 4, 4)), ShapeError);
  BilinearSampler<float> s;
  CHECK_THROWS_AS(s.backward(FeatureMap(3, 4, 4)), Error);
  const WarpGrid g = identity_grid<float>(4, 4);
  CHECK_THROWS_AS(bilinear_sample_backward(img, g, FeatureMap(3, 5, 4)), ShapeError);
}

TEST_CASE("bilinear sampling gradients match finite differences") {
  for (std::uint64_t seed : {41, 42, 43}) {
    Rng rng(seed);
    FeatureMapD img = random_map(2, 7, 8, rng);
    WarpGridD grid = random_smooth_grid(5, 6, 7, 8, rng);
    const FeatureMapD weights = random_map(2, 5, 6, rng);
    auto loss = [&]() { return testing::weighted_sum(bilinear_sample(img, grid), weights); };
    const SampleGradients<double> g = bilinear_sample_backward(img, grid, weights);
    auto r = testing::check_entries(img.data, g.input.data, loss, "input", 1000);
    r.merge(testing::check_entries(grid.coords.data, g.grid.coords.data, loss, "grid", 1000));
    INFO(r.worst);
    CHECK(r.ok());
  }
}

TEST_CASE("clamped coordinates get no gradient along the clamped axis") {
  Rng rng(5);
  const FeatureMapD img = random_map(1, 4, 4, rng);
  WarpGridD g(1, 1);
  g.x(0, 0) = 1.5;
  g.y(0, 0) = 0.1;
  const auto grads = bilinear_sample_backward(img, g, FeatureMapD(1, 1, 1, 1.0));
  CHECK(grads.grid.x(0, 0) == 0.0);
  CHECK(grads.grid.y(0, 0) != 0.0);
}

TEST_CASE("input gradient is the adjoint of sampling") {
  for (std::uint64_t seed : {51, 52, 53}) {
    Rng rng(seed);
    const FeatureMapD x = random_map(3, 9, 7, rng);
    WarpGridD grid(6, 5);
    for (auto& v : grid.coords.data) v = rng.uniform(-1.3, 1.3);
    const FeatureMapD y = random_map(3, 6, 5, rng);
    const double lhs = testing::weighted_sum(bilinear_sample(x, grid), y);
    const double rhs = testing::weighted_sum(x, bilinear_sample_backward(x, grid, y).input);
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("sampler module caches per call and reverses in order") {
  Rng rng(6);
  BilinearSampler<double> s;
  const FeatureMapD a = random_map(1, 4, 4, rng);
  const FeatureMapD b = random_map(1, 4, 4, rng);
  const WarpGridD g = random_smooth_grid(3, 3, 4, 4, rng);
  s.forward(a, g);
  s.forward(b, g);
  CHECK(s.cache_depth() == 2);
  const FeatureMapD up = random_map(1, 3, 3, rng);
  CHECK(s.backward(up).grid.coords.data == bilinear_sample_backward(b, g, up).grid.coords.data);
  CHECK(s.backward(up).grid.coords.data == bilinear_sample_backward(a, g, up).grid.coords.data);
  CHECK(s.cache_depth() == 0);
}

TEST_CASE("composition matches sampling twice on affine images") {
  Rng rng(7);
  const int n = 12;
  FeatureMapD img(1, n, n);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) img.at(0, i, j) = 0.3 * j - 0.7 * i + 1.0;
  // Inner and outer stay inside the canvas so no clamping is involved.
  const WarpGridD inner = shifted_grid(n, n, n, n, 0.0, 0.0);
  WarpGridD inner2 = inner;
  for (auto& v : inner2.coords.data) v *= 0.8;
  WarpGridD outer(n, n);
  for (auto& v : outer.coords.data) v = rng.uniform(-0.9, 0.9);
  const FeatureMapD twice = bilinear_sample(bilinear_sample(img, inner2), outer);
  const FeatureMapD once = bilinear_sample(img, compose(outer, inner2));
  for (std::size_t k = 0; k < once.size(); ++k) CHECK(once.data[k] == doctest::Approx(twice.data[k]).epsilon(1e-12));
  // The identity is neutral on both sides.
  const WarpGridD id = identity_grid<double>(n, n);
  CHECK(compose(id, outer).coords.data == outer.coords.data);
}

TEST_CASE("relative shifts round trip and resize keeps identity and constants") {
  Rng rng(8);
  WarpGrid g(8, 8);
  for (auto& v : g.coords.data) v = static_cast<float>(rng.uniform(-1, 1));
  const WarpGrid back = from_relative(to_relative(g));
  for (std::size_t k = 0; k < g.coords.size(); ++k) CHECK(back.coords.data[k] == doctest::Approx(g.coords.data[k]));

  CHECK(resize_grid(identity_grid<float>(16, 16), 64, 64).coords.data == identity_grid<float>(64, 64).coords.data);
  WarpGrid rel(16, 16);
  for (int i = 0; i < 16; ++i)
    for (int j = 0; j < 16; ++j) {
      rel.x(i, j) = 0.1f;
      rel.y(i, j) = -0.05f;
    }
  const WarpGrid up = to_relative(resize_grid(from_relative(rel), 64, 64));
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) {
      CHECK(up.x(i, j) == doctest::Approx(0.1f).epsilon(1e-5));
      CHECK(up.y(i, j) == doctest::Approx(-0.05f).epsilon(1e-5));
    }
}

TEST_CASE("endpoint error in source pixels") {
  const WarpGrid id = identity_grid<float>(4, 4);
  WarpGrid shifted = id;
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) {
      shifted.x(i, j) += static_cast<float>(2.0 * 3.0 / 63.0);  // 3 px in a 64 px source
      shifted.y(i, j) += static_cast<float>(2.0 * 4.0 / 63.0);  // 4 px
    }
  CHECK(endpoint_error(id, id, 64, 64) == 0.0);
  CHECK(endpoint_error(shifted, id, 64, 64) == doctest::Approx(5.0).epsilon(1e-5));
  std::vector<std::uint8_t> mask(16, 0);
  CHECK(endpoint_error(shifted, id, 64, 64, mask) == 0.0);
  mask[3] = 1;
  CHECK(endpoint_error(shifted, id, 64, 64, mask) == doctest::Approx(5.0).epsilon(1e-5));
  CHECK_THROWS_AS(endpoint_error(shifted, id, 64, 64, std::vector<std::uint8_t>(3, 1)), ShapeError);
}

TEST_CASE("small identity grids follow the pixel-index formula") {
  const WarpGridD g2 = identity_grid<double>(2, 2);
  CHECK(g2.coords.data == std::vector<double>{-1, 1, -1, 1, -1, -1, 1, 1});
  const WarpGridD g1 = identity_grid<double>(1, 1);
  CHECK(g1.x(0, 0) == 0.0);
  CHECK(g1.y(0, 0) == 0.0);
  for (double v : to_relative(identity_grid<double>(5, 3)).coords.data) CHECK(v == 0.0);
}

TEST_CASE("identity grid with a sum loss passes ones to the input") {
  const FeatureMapD img(2, 5, 4, 0.3);
  const auto g = bilinear_sample_backward(img, identity_grid<double>(5, 4), FeatureMapD(2, 5, 4, 1.0));
  for (double v : g.input.data) CHECK(v == 1.0);
}

TEST_CASE("sampling is linear in the input") {
  Rng rng(9);
  const FeatureMap a = testing::random_mapf(2, 8, 8, rng);
  const FeatureMap b = testing::random_mapf(2, 8, 8, rng);
  WarpGrid g(6, 6);
  for (auto& v : g.coords.data) v = static_cast<float>(rng.uniform(-1.2, 1.2));
  FeatureMap mix = a;
  for (std::size_t k = 0; k < mix.size(); ++k) mix.data[k] = 0.7f * a.data[k] - 1.3f * b.data[k];
  const FeatureMap sa = bilinear_sample(a, g);
  const FeatureMap sb = bilinear_sample(b, g);
  const FeatureMap sm = bilinear_sample(mix, g);
  for (std::size_t k = 0; k < sm.size(); ++k) CHECK(std::abs(sm.data[k] - (0.7f * sa.data[k] - 1.3f * sb.data[k])) < 1e-5);
}

TEST_CASE("a pixel only influences cells sampling within one cell of it") {
  Rng rng(10);
  const int n = 10;
  FeatureMapD img = random_map(1, n, n, rng);
  WarpGridD g(8, 8);
  for (auto& v : g.coords.data) v = rng.uniform(-1.0, 1.0);
  const FeatureMapD before = bilinear_sample(img, g);
  const int px = 4, py = 6;
  img.at(0, py, px) += 1.0;
  const FeatureMapD after = bilinear_sample(img, g);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      const bool near = std::abs(to_pixel(g.x(i, j), n) - px) < 1.0 && std::abs(to_pixel(g.y(i, j), n) - py) < 1.0;
      if (!near) CHECK(after.at(0, i, j) == before.at(0, i, j));
    }
}

TEST_CASE("constant shifts add under composition and rigid motions compose in closed form") {
  const int n = 16;
  const WarpGridD a = shifted_grid(n, n, n, n, 1.5, -0.5);
  const WarpGridD b = shifted_grid(n, n, n, n, -2.0, 1.0);
  const WarpGridD ab = compose(a, b);
  for (int i = 3; i < n - 3; ++i)
    for (int j = 3; j < n - 3; ++j) {
      CHECK(to_pixel(ab.x(i, j), n) == doctest::Approx(j - 0.5).epsilon(1e-9));
      CHECK(to_pixel(ab.y(i, j), n) == doctest::Approx(i + 0.5).epsilon(1e-9));
    }
  // Rotations about the center: composing angles t1 and t2 gives t1 + t2.
  auto rotation = [&](double t) {
    WarpGridD g(n, n);
    const double c = 0.5 * (n - 1);
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j) {
        const double x = j - c, y = i - c;
        g.x(i, j) = to_normalized(c + std::cos(t) * x - std::sin(t) * y, n);
        g.y(i, j) = to_normalized(c + std::sin(t) * x + std::cos(t) * y, n);
      }
    return g;
  };
  const WarpGridD composed = compose(rotation(0.1), rotation(0.15));
  const WarpGridD direct = rotation(0.25);
  for (int i = 4; i < n - 4; ++i)
    for (int j = 4; j < n - 4; ++j) {
      CHECK(std::abs(composed.x(i, j) - direct.x(i, j)) < 1e-3);
      CHECK(std::abs(composed.y(i, j) - direct.y(i, j)) < 1e-3);
    }
}

TEST_CASE("non-finite coordinates are rejected") {
  WarpGrid g = identity_grid<float>(2, 2);
  g.x(1, 0) = NAN;
  CHECK_THROWS_AS(bilinear_sample(FeatureMap(1, 4, 4), g), NumericError);
  g.x(1, 0) = INFINITY;
  CHECK_THROWS_AS(bilinear_sample(FeatureMap(1, 4, 4), g), NumericError);
}
