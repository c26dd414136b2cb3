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

#include "dwnet/losses.hpp"
#include "dwnet/optim.hpp"
#include "gradcheck.hpp"

using namespace dwnet;
using dwnet::testing::random_map;

namespace {

FeatureMapD map2x2(std::initializer_list<double> v) {
  FeatureMapD m(1, 2, 2);
  m.data.assign(v.begin(), v.end());
  return m;
}

template <typename T>
double rec(std::vector<FeatureExtractor<T>*> ex, const BasicFeatureMap<T>& t, const BasicFeatureMap<T>& g) {
  return reconstruction_loss<T>(std::span<FeatureExtractor<T>* const>(ex), t, g);
}

}  // namespace

TEST_CASE("least-squares critic loss") {
  CHECK(lsgan_d_loss(map2x2({1, 1, 1, 1}), map2x2({0, 0, 0, 0})) == 0.0);
  CHECK(lsgan_d_loss(map2x2({0, 0, 0, 0}), map2x2({0, 0, 0, 0})) == 1.0);
  // Hand arithmetic: real (0.25 + 0 + 1 + 2.25) / 4, fake (0 + 0 + 1 + 1) / 4.
  const double want = (0.25 + 0.0 + 1.0 + 2.25) / 4.0 + (0.0 + 0.0 + 1.0 + 1.0) / 4.0;
  CHECK(lsgan_d_loss(map2x2({0.5, 1, 0, -0.5}), map2x2({0, 0, 1, 1})) == doctest::Approx(want).epsilon(1e-12));
  CHECK(want == 1.375);
  CHECK_THROWS_AS(lsgan_d_loss(FeatureMapD(), map2x2({0, 0, 0, 0})), ShapeError);
}

TEST_CASE("least-squares generator loss") {
  CHECK(lsgan_g_loss(map2x2({1, 1, 1, 1})) == 0.0);
  CHECK(lsgan_g_loss(map2x2({0, 0, 0, 0})) == 1.0);
  Rng rng(1);
  for (int t = 0; t < 20; ++t) {
    const FeatureMapD s = random_map(1, 3, 3, rng);
    CHECK(lsgan_g_loss(s) >= 0.0);
    CHECK(lsgan_d_loss(s, s) >= 0.0);
  }
}

TEST_CASE("score-map gradients of both objectives") {
  Rng rng(2);
  FeatureMapD real = random_map(1, 3, 4, rng);
  FeatureMapD fake = random_map(1, 3, 4, rng);
  FeatureMapD gr, gf, gg;
  lsgan_d_loss(real, fake, &gr, &gf);
  lsgan_g_loss(fake, &gg);
  auto d = [&]() { return lsgan_d_loss(real, fake); };
  auto g = [&]() { return lsgan_g_loss(fake); };
  auto r = testing::check_entries(real.data, gr.data, d, "real");
  r.merge(testing::check_entries(fake.data, gf.data, d, "fake"));
  r.merge(testing::check_entries(fake.data, gg.data, g, "gen"));
  CHECK(r.ok());
}

TEST_CASE("generator objective through a one-layer critic") {
  for (std::uint64_t seed : {3, 4, 5}) {
    Rng rng(seed);
    nn::Conv2d<double> critic({3, 1, 4, 2, 1, true});
    nn::randomize_parameters(critic, rng, 0.3);
    FeatureMapD x = random_map(3, 8, 8, rng);
    auto loss = [&]() {
      nn::NoGradGuard no_grad;
      return lsgan_g_loss(critic.forward(x));
    };
    critic.zero_grad();
    FeatureMapD gs;
    lsgan_g_loss(critic.forward(x), &gs);
    const FeatureMapD gx = critic.backward(gs);
    auto r = testing::check_entries(x.data, gx.data, loss, "x");
    for (auto* p : critic.parameters()) r.merge(testing::check_entries(p->value, p->grad, loss, p->name));
    INFO(r.worst);
    CHECK(r.ok());
  }
}

TEST_CASE("patch critic produces a score map and correct gradients") {
  PatchCritic<float> critic;
  Rng rng(6);
  critic.init(rng);
  const auto taps = critic.forward_taps(FeatureMap(3, 64, 64));
  REQUIRE(taps.size() == 3);
  CHECK(taps[0].shape_string() == "32x32x32");
  CHECK(taps[1].shape_string() == "64x16x16");
  CHECK(taps[2].shape_string() == "1x8x8");
  critic.clear_cache();

  for (std::uint64_t seed : {7, 8, 9}) {
    Rng r2(seed);
    CriticConfig cfg;
    cfg.width = 3;
    cfg.conditional = seed == 9;
    PatchCritic<double> c(cfg);
    c.init(r2);
    FeatureMapD x = random_map(cfg.input_channels(), 16, 16, r2);
    std::vector<FeatureMapD> w;
    {
      nn::NoGradGuard no_grad;
      for (const auto& t : c.forward_taps(x)) w.push_back(random_map(t.channels, t.height, t.width, r2));
    }
    auto loss = [&]() {
      nn::NoGradGuard no_grad;
      const auto taps = c.forward_taps(x);
      double s = 0;
      for (std::size_t k = 0; k < taps.size(); ++k) s += testing::weighted_sum(taps[k], w[k]);
      return s;
    };
    c.zero_grad();
    c.forward_taps(x);
    const FeatureMapD gx = c.backward_taps(w);
    CHECK(c.cache_depth() == 0);
    auto r = testing::check_entries(x.data, gx.data, loss, "x");
    for (auto* p : c.parameters()) r.merge(testing::check_entries(p->value, p->grad, loss, p->name, 24));
    INFO(r.worst);
    CHECK(r.ok());
  }
}

TEST_CASE("reconstruction loss reduces to L1 and vanishes on equal images") {
  Rng rng(10);
  const FeatureMapD t = random_map(3, 8, 8, rng);
  const FeatureMapD g = random_map(3, 8, 8, rng);
  IdentityExtractor<double> id;
  RandomConvExtractor<double> pyramid(3, 4);
  double l1 = 0;
  for (std::size_t k = 0; k < t.size(); ++k) l1 += std::abs(t.data[k] - g.data[k]);
  CHECK(rec<double>({&id}, t, g) == doctest::Approx(l1 / t.size()).epsilon(1e-12));
  CHECK(rec<double>({&id, &pyramid}, t, t) == 0.0);
  CHECK(rec<double>({&id, &pyramid}, t, g) == doctest::Approx(rec<double>({&pyramid, &id}, t, g)).epsilon(1e-12));
  CHECK(rec<double>({&pyramid}, t, g) == doctest::Approx(rec<double>({&pyramid}, g, t)).epsilon(1e-12));
  CHECK(rec<double>({&pyramid}, t, g) > 0.0);
  CHECK(rec<double>({}, t, g) == 0.0);
  CHECK(id.cache_depth() == 0);
  CHECK(pyramid.cache_depth() == 0);
}

TEST_CASE("reconstruction gradient matches finite differences") {
  for (std::uint64_t seed : {11, 12, 13}) {
    Rng rng(seed);
    IdentityExtractor<double> id;
    RandomConvExtractor<double> pyramid(2, 3, seed);
    CriticConfig cc;
    cc.image_channels = 2;
    cc.width = 3;
    PatchCritic<double> critic(cc);
    critic.init(rng);
    CriticFeatureExtractor<double> fm(critic);
    std::vector<FeatureExtractor<double>*> ex = {&id, &pyramid, &fm};
    const FeatureMapD t = random_map(2, 8, 8, rng);
    FeatureMapD g = random_map(2, 8, 8, rng);
    critic.zero_grad();
    const auto lg = reconstruction_loss_grad<double>(ex, t, g);
    CHECK(lg.value == doctest::Approx(rec<double>(ex, t, g)).epsilon(1e-12));
    CHECK(critic.cache_depth() == 0);
    auto loss = [&]() { return rec<double>(ex, t, g); };
    const auto r = testing::check_entries(g.data, lg.grad.data, loss, "generated", 128);
    INFO(r.worst);
    CHECK(r.ok());
  }
}

TEST_CASE("feature matching uses every critic stage but the score map") {
  PatchCritic<float> critic;
  Rng rng(14);
  critic.init(rng);
  CriticFeatureExtractor<float> fm(critic);
  const auto taps = fm.extract(testing::random_mapf(3, 32, 32, rng));
  CHECK(taps.size() == 2);
  CHECK(taps[0].channels == 32);
  fm.clear_cache();
}

TEST_CASE("the perceptual pyramid is fixed") {
  Rng rng(15);
  RandomConvExtractor<float> a, b;
  const FeatureMap x = testing::random_mapf(3, 16, 16, rng);
  const auto ta = a.extract(x);
  const auto tb = b.extract(x);
  REQUIRE(ta.size() == 3);
  for (std::size_t k = 0; k < 3; ++k) CHECK(ta[k].data == tb[k].data);
  // Backpropagation leaves it unchanged and reusable.
  std::vector<FeatureMap> grads;
  for (const auto& t : ta) grads.emplace_back(t.channels, t.height, t.width, 1.f);
  a.backward(grads);
  b.clear_cache();
  nn::NoGradGuard no_grad;
  const auto again = a.extract(x);
  for (std::size_t k = 0; k < 3; ++k) CHECK(again[k].data == ta[k].data);
}

TEST_CASE("total objective") {
  const std::vector<double> g = {0.2, 0.2, 0.2};
  const std::vector<double> r = {0.05, 0.05, 0.05};
  CHECK(total_loss(g, r, kDefaultLambda) == doctest::Approx(0.2 * 3 + 10 * 0.05 * 3).epsilon(1e-12));
  CHECK(std::abs(total_loss(g, r, 10.0) - 2.1) < 1e-6);
  CHECK(total_loss(g, r, 0.0) == doctest::Approx(0.6));
  const std::vector<double> z = {0, 0, 0};
  CHECK(total_loss(z, z, 10.0) == 0.0);
  CHECK(kDefaultLambda == 10.0);
}

TEST_CASE("one-layer model overfits a single sample under the reconstruction loss") {
  Rng rng(16);
  const FeatureMap input = testing::random_mapf(3, 16, 16, rng, 0.5);
  nn::Conv2d<float> teacher({3, 3, 3, 1, 1, true});
  nn::randomize_parameters(teacher, rng, 0.2);
  FeatureMap target;
  {
    nn::NoGradGuard no_grad;
    target = teacher.forward(input);
  }
  nn::Conv2d<float> model({3, 3, 3, 1, 1, true});
  model.init_he(rng);
  IdentityExtractor<float> id;
  RandomConvExtractor<float> pyramid(3, 8);
  std::vector<FeatureExtractor<float>*> ex = {&id, &pyramid};
  nn::Optimizer<float> opt(model.parameters());
  const nn::LinearDecay schedule(1e-2, 500);
  double last = 0;
  for (int step = 0; step < 500; ++step) {
    model.zero_grad();
    const FeatureMap out = model.forward(input);
    const auto lg = reconstruction_loss_grad<float>(ex, target, out);
    last = lg.value;
    model.backward(lg.grad);
    opt.step(schedule.at(step));
  }
  nn::NoGradGuard no_grad;
  const double final_loss = rec<float>(ex, target, model.forward(input));
  INFO("last step loss " << last);
  CHECK(final_loss < 1e-3);
}
