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

#include <algorithm>
#include <cmath>

#include "dwnet/checkpoint.hpp"
#include "dwnet/generator.hpp"
#include "dwnet/synth.hpp"
#include "gradcheck.hpp"
#include "tempdir.hpp"

using namespace dwnet;
using dwnet::testing::random_map;

namespace {

// Every weight feeds thousands of ReLUs, so the step must be small enough
// that few of them flip inside it.
constexpr double kStep = 1e-6;

GeneratorConfig tiny_config(int image_size = 16, int n_parts = 24, int width = 2) {
  GeneratorConfig c;
  c.image_size = image_size;
  c.grid_size = image_size / 4;
  c.n_parts = n_parts;
  c.pose_features = width;
  c.appearance_features = width;
  c.decoder_width = 4 * width;
  c.decoder_blocks = 1;
  c.refiner_width = 4;
  c.refiner_blocks = 1;
  return c;
}

IuvMap random_iuv(int n, int n_parts, Rng& rng) {
  IuvMap m(n, n);
  for (std::size_t i = 0; i < m.size(); ++i) {
    m.part[i] = static_cast<std::int32_t>(rng.uniform_int(0, n_parts));
    m.u[i] = static_cast<float>(rng.uniform());
    m.v[i] = static_cast<float>(rng.uniform());
  }
  return m;
}

synth::SyntheticSequence scene_sequence(int size, int frames, std::uint64_t seed) {
  synth::SceneOptions o;
  o.height = o.width = size;
  o.frames = frames;
  o.max_translation *= size / 64.0;
  return synth::generate_synthetic_sequence(synth::make_random_scene(o, seed), frames, seed);
}

std::vector<IuvMap> poses_of(const VideoSample& v) {
  std::vector<IuvMap> out;
  for (const auto& f : v.driving) out.push_back(f.iuv);
  return out;
}

double mean_abs_diff(const FeatureMap& a, const FeatureMap& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(double(a.data[i]) - double(b.data[i]));
  return s / double(a.size());
}

}  // namespace

TEST_CASE("generated frames have the image shape and stay in range") {
  const auto seq = scene_sequence(32, 3, 1);
  GeneratorNet<float> net(tiny_config(32));
  net.init(1);
  const Conditioning<float> src{seq.video.source.image, seq.video.source.iuv, FrameOrigin::kSource};
  const FeatureMap out = net.generate_frame(src, src, seq.video.driving[0].iuv);
  CHECK(out.channels == 3);
  CHECK(out.height == 32);
  CHECK(out.width == 32);
  for (float v : out.data) {
    REQUIRE(std::isfinite(v));
    CHECK(std::abs(v) <= 1.0f);
  }
  net.clear_cache();
  CHECK(net.cache_depth() == 0);
}

TEST_CASE("configuration errors") {
  GeneratorConfig c = tiny_config();
  c.grid_size = 5;
  CHECK_THROWS_AS(GeneratorNet<float>{c}, ConfigError);
  c = tiny_config();
  c.pose_features = 0;
  CHECK_THROWS_AS(GeneratorNet<float>{c}, ConfigError);
  // Warp-only mode ignores the grid size but cannot be trained.
  c = tiny_config();
  c.warp_only = true;
  c.grid_size = 3;
  GeneratorNet<float> net(c);
  CHECK_THROWS_AS(Trainer(net, TrainerConfig{}), ConfigError);
  CHECK_NOTHROW(GeneratorConfig::paper().validate());
}

TEST_CASE("real driving frames never enter the previous-frame path") {
  const auto seq = scene_sequence(16, 2, 2);
  GeneratorNet<float> net(tiny_config());
  net.init(2);
  const Conditioning<float> src{seq.video.source.image, seq.video.source.iuv, FrameOrigin::kSource};
  const Conditioning<float> real{seq.video.driving[0].image, seq.video.driving[0].iuv, FrameOrigin::kReal};
  CHECK_THROWS_AS(net.generate_frame(src, real, seq.video.driving[1].iuv), ValidationError);
  CHECK(net.cache_depth() == 0);

  const FeatureMap small(3, 8, 8);
  const Conditioning<float> bad{small, seq.video.source.iuv, FrameOrigin::kGenerated};
  CHECK_THROWS_AS(net.generate_frame(src, bad, seq.video.driving[1].iuv), ShapeError);
  CHECK_THROWS_AS(net.generate_frame(src, src, IuvMap(8, 8)), ShapeError);
}

TEST_CASE("warp-only mode reproduces the source under its own pose") {
  const auto seq = scene_sequence(32, 2, 3);
  GeneratorConfig c;
  c.image_size = 32;
  c.warp_only = true;
  GeneratorNet<float> net(c);
  net.init(0);
  const Frame& s = seq.video.source;
  const Conditioning<float> src{s.image, s.iuv, FrameOrigin::kSource};
  CHECK(net.generate_frame(src, src, s.iuv).data == s.image.data);
  CHECK(net.parameters().size() == net.refiner().parameters().size());
  CHECK_THROWS_AS(net.backward(FeatureMap(3, 32, 32)), ConfigError);
}

TEST_CASE("warp-only mode matches the ground-truth warp on translations") {
  GeneratorConfig c;
  c.image_size = 64;
  c.warp_only = true;
  GeneratorNet<float> net(c);
  net.init(0);
  double err = 0;
  std::size_t count = 0;
  for (std::uint64_t seed = 40; seed < 44; ++seed) {
    synth::SceneOptions o;
    o.frames = 2;
    synth::SyntheticScene scene = synth::make_static_scene(o, seed);
    scene.motion[1].tx = 3;
    scene.motion[1].ty = -2;
    scene.motion[2].tx = -4;
    scene.motion[2].ty = 1;
    const auto seq = synth::generate_synthetic_sequence(scene, 2, seed);
    const Frame& s = seq.video.source;
    const Conditioning<float> src{s.image, s.iuv, FrameOrigin::kSource};
    for (std::size_t k = 0; k < seq.video.driving.size(); ++k) {
      const FeatureMap out = net.generate_frame(src, src, seq.video.driving[k].iuv);
      const FeatureMap want = bilinear_sample(s.image, seq.ground_truth[k]);
      const auto& mask = seq.masks[k];
      for (int ch = 0; ch < 3; ++ch) {
        for (std::size_t i = 0; i < mask.size(); ++i) {
          if (!mask[i]) continue;
          err += std::abs(double(out.data[ch * mask.size() + i]) - double(want.data[ch * mask.size() + i]));
          ++count;
        }
      }
    }
  }
  REQUIRE(count > 0);
  CHECK(err / double(count) < 1e-2);
}

TEST_CASE("rollout equals repeated manual application") {
  const auto seq = scene_sequence(16, 4, 4);
  GeneratorNet<float> net(tiny_config());
  net.init(4);
  const auto poses = poses_of(seq.video);
  const auto frames = rollout(net, seq.video.source, poses);
  REQUIRE(frames.size() == poses.size());
  CHECK(net.cache_depth() == 0);

  const Frame& s = seq.video.source;
  const Conditioning<float> src{s.image, s.iuv, FrameOrigin::kSource};
  nn::NoGradGuard no_grad;
  FeatureMap prev = net.generate_frame(src, src, poses[0]);
  CHECK(prev.data == frames[0].data);
  for (std::size_t k = 1; k < poses.size(); ++k) {
    const Conditioning<float> p{prev, poses[k - 1], FrameOrigin::kGenerated};
    FeatureMap cur = net.generate_frame(src, p, poses[k]);
    CHECK(cur.data == frames[k].data);
    prev = std::move(cur);
  }
  CHECK(rollout(net, s, poses)[3].data == frames[3].data);
  CHECK(rollout(net, s, std::span<const IuvMap>()).empty());
}

TEST_CASE("quadruple sampling covers its ranges uniformly") {
  Rng rng(5);
  CHECK_THROWS_AS(sample_quadruple(2, rng), ValidationError);
  for (int t = 0; t < 20; ++t) CHECK(sample_quadruple(3, rng).j == 1);
  const int n = 100, draws = 10000;
  std::vector<int> ci(n + 1), cj(n + 1);
  int same = 0;
  for (int t = 0; t < draws; ++t) {
    const TrainingQuadruple q = sample_quadruple(n, rng);
    REQUIRE(q.i >= 1);
    REQUIRE(q.i <= n);
    REQUIRE(q.j >= 1);
    REQUIRE(q.j + 2 <= n);
    ++ci[q.i];
    ++cj[q.j];
    same += q.i == q.j;
  }
  auto within_3_sigma = [&](int count, double p) {
    return std::abs(count - draws * p) <= 3 * std::sqrt(draws * p * (1 - p));
  };
  for (int j = 1; j <= n - 2; ++j) CHECK(within_3_sigma(cj[j], 1.0 / (n - 2)));
  CHECK(ci[n] > 0);
  CHECK(ci[n - 1] > 0);
  CHECK(same > 0);
}

TEST_CASE("gradients flow through a chain of two generated frames") {
  for (std::uint64_t seed : {21, 22, 23, 24}) {
    Rng rng(seed);
    // Two channels per encoder layer: without normalization a single ReLU
    // channel can be negative everywhere and cut the path.
    GeneratorConfig c = tiny_config(16, 2, 4);
    c.normalize = seed % 2 == 0;
    GeneratorNet<double> net(c);
    net.init(seed);
    nn::randomize_parameters(net.refiner().output_conv(), rng, 0.1);
    // Without normalization the residual branches start at zero.
    if (!c.normalize) nn::randomize_parameters(net.decoder(), rng, 0.1);
    FeatureMapD source = random_map(3, 16, 16, rng, 0.5);
    const IuvMap s_pose = random_iuv(16, 2, rng);
    const IuvMap p1 = random_iuv(16, 2, rng);
    const IuvMap p2 = random_iuv(16, 2, rng);
    const FeatureMapD weights = random_map(3, 16, 16, rng);
    auto chain = [&]() {
      const Conditioning<double> src{source, s_pose, FrameOrigin::kSource};
      const FeatureMapD f1 = net.generate_frame(src, src, p1);
      const Conditioning<double> prev{f1, p1, FrameOrigin::kGenerated};
      return net.generate_frame(src, prev, p2);
    };
    auto loss = [&]() {
      nn::NoGradGuard no_grad;
      return testing::weighted_sum(chain(), weights);
    };
    net.zero_grad();
    chain();
    const auto g2 = net.backward(weights);
    double prev_norm = 0;
    for (double v : g2.prev.data) prev_norm += v * v;
    INFO("seed " << seed);
    CHECK(prev_norm > 0);
    const auto g1 = net.backward(g2.prev);
    CHECK(net.cache_depth() == 0);
    FeatureMapD grad_source = g2.source;
    grad_source += g1.source;
    grad_source += g1.prev;

    testing::GradCheck r;
    r.merge(testing::check_entries(source.data, grad_source.data, loss, "source", 32, kStep));
    int k = 0;
    for (auto* p : net.parameters()) r.merge(testing::check_entries(p->value, p->grad, loss, p->name + std::to_string(k++), 8, kStep));
    INFO(r.worst << " checked " << r.checked << " failed " << r.failures << " skipped " << r.skipped);
    CHECK(r.ok());
  }
}

TEST_CASE("detach_prev treats the previous frame as a constant") {
  Rng rng(31);
  GeneratorConfig c = tiny_config(16, 2);
  c.detach_prev = true;
  GeneratorNet<double> net(c);
  net.init(31);
  const FeatureMapD source = random_map(3, 16, 16, rng, 0.5);
  const IuvMap s_pose = random_iuv(16, 2, rng);
  const IuvMap p1 = random_iuv(16, 2, rng);
  const IuvMap p2 = random_iuv(16, 2, rng);
  const FeatureMapD weights = random_map(3, 16, 16, rng);
  const Conditioning<double> src{source, s_pose, FrameOrigin::kSource};
  FeatureMapD f1;
  {
    nn::NoGradGuard no_grad;
    f1 = net.generate_frame(src, src, p1);
  }
  const Conditioning<double> prev{f1, p1, FrameOrigin::kGenerated};
  auto loss = [&]() {
    nn::NoGradGuard no_grad;
    return testing::weighted_sum(net.generate_frame(src, prev, p2), weights);
  };
  net.zero_grad();
  net.generate_frame(src, prev, p2);
  const auto g = net.backward(weights);
  for (double v : g.prev.data) REQUIRE(v == 0.0);
  testing::GradCheck r;
  int k = 0;
  for (auto* p : net.parameters()) r.merge(testing::check_entries(p->value, p->grad, loss, p->name + std::to_string(k++), 8, kStep));
  INFO(r.worst << " checked " << r.checked << " failed " << r.failures << " skipped " << r.skipped);
  CHECK(r.ok());
}

TEST_CASE("disabled paths are fed zeros and get no gradient") {
  const auto seq = scene_sequence(16, 2, 6);
  GeneratorConfig c = tiny_config();
  c.use_prev_path = false;
  GeneratorNet<float> net(c);
  net.init(6);
  const Frame& s = seq.video.source;
  const Conditioning<float> src{s.image, s.iuv, FrameOrigin::kSource};
  const FeatureMap a = net.generate_frame(src, src, seq.video.driving[0].iuv);
  const auto g = net.backward(FeatureMap(3, 16, 16, 1.f));
  for (float v : g.prev.data) REQUIRE(v == 0.f);
  // Without the previous-frame path, its content does not matter.
  FeatureMap other = s.image;
  other *= -1.f;
  const Conditioning<float> p{other, s.iuv, FrameOrigin::kGenerated};
  nn::NoGradGuard no_grad;
  CHECK(net.generate_frame(src, p, seq.video.driving[0].iuv).data == a.data);
}

TEST_CASE("checkpoints round-trip and reject a different architecture") {
  testing::TempDir tmp("gen_ckpt");
  const auto seq = scene_sequence(16, 2, 7);
  const Frame& s = seq.video.source;
  const Conditioning<float> src{s.image, s.iuv, FrameOrigin::kSource};
  GeneratorNet<float> a(tiny_config());
  a.init(7);
  io::write_checkpoint(tmp / "ckpt", a.parameters(), {{"role", "generator"}});

  GeneratorNet<float> b(tiny_config());
  b.init(8);
  const auto meta = io::read_checkpoint(tmp / "ckpt", b.parameters());
  CHECK(meta.at("role") == "generator");
  const auto pa = a.parameters();
  const auto pb = b.parameters();
  for (std::size_t k = 0; k < pa.size(); ++k) CHECK(pa[k]->value == pb[k]->value);
  nn::NoGradGuard no_grad;
  CHECK(a.generate_frame(src, src, seq.video.driving[0].iuv).data ==
        b.generate_frame(src, src, seq.video.driving[0].iuv).data);

  GeneratorConfig wider = tiny_config();
  wider.decoder_blocks = 2;
  GeneratorNet<float> c(wider);
  c.init(9);
  std::vector<std::vector<float>> before;
  for (auto* p : c.parameters()) before.push_back(p->value);
  CHECK_THROWS_AS(io::read_checkpoint(tmp / "ckpt", c.parameters()), ConfigError);
  std::size_t k = 0;
  for (auto* p : c.parameters()) CHECK(p->value == before[k++]);
}

TEST_CASE("trainer steps are deterministic and report consistent losses") {
  const auto seq = scene_sequence(16, 4, 8);
  const auto video = seq.video.frames();
  std::vector<StepLosses> runs[2];
  std::vector<std::vector<float>> params[2];
  for (int r = 0; r < 2; ++r) {
    GeneratorNet<float> net(tiny_config());
    net.init(8);
    TrainerConfig tc;
    tc.seed = 8;
    tc.critic.width = 4;
    tc.total_steps = 3;
    Trainer trainer(net, tc);
    Rng rng(8);
    for (int k = 0; k < 3; ++k) runs[r].push_back(trainer.step(video, rng));
    CHECK(trainer.steps_taken() == 3);
    CHECK(net.cache_depth() == 0);
    for (auto* p : net.parameters()) params[r].push_back(p->value);
  }
  for (int k = 0; k < 3; ++k) {
    const StepLosses& l = runs[0][k];
    CHECK(l.d_loss == runs[1][k].d_loss);
    CHECK(l.total == runs[1][k].total);
    CHECK(std::isfinite(l.total));
    CHECK(l.rec_loss == doctest::Approx(l.frame_rec[0] + l.frame_rec[1] + l.frame_rec[2]));
    CHECK(l.total == doctest::Approx(l.g_loss + kDefaultLambda * l.rec_loss));
  }
  CHECK(params[0] == params[1]);
}

TEST_CASE("trainer steps change the generator and reject bad quadruples") {
  const auto seq = scene_sequence(16, 3, 9);
  const auto video = seq.video.frames();
  GeneratorNet<float> net(tiny_config());
  net.init(9);
  std::vector<std::vector<float>> before;
  for (auto* p : net.parameters()) before.push_back(p->value);
  TrainerConfig tc;
  tc.critic.width = 4;
  Trainer trainer(net, tc);
  CHECK_THROWS_AS(trainer.step(video, TrainingQuadruple{1, 3}), ValidationError);
  CHECK_THROWS_AS(trainer.step(video, TrainingQuadruple{5, 1}), ValidationError);
  CHECK(trainer.steps_taken() == 0);
  // Zero-started layers (the refiner output, residual branches without
  // normalization) shield the layers before them on the first step only.
  trainer.step(video, TrainingQuadruple{2, 2});
  trainer.step(video, TrainingQuadruple{1, 1});
  std::size_t k = 0;
  for (auto* p : net.parameters()) {
    CHECK_MESSAGE(p->value != before[k], p->name);
    ++k;
  }
}
