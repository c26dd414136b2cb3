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
#include <filesystem>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "dwnet/checkpoint.hpp"
#include "dwnet/pipeline.hpp"
#include "tempdir.hpp"

using namespace dwnet;
namespace fs = std::filesystem;

namespace {

pipeline::RunConfig small_run(const fs::path& data) {
  pipeline::RunConfig c;
  c.dims = 32;
  c.scenes = 2;
  c.frames = 3;
  c.steps = 2;
  c.seed = 3;
  c.data = data.string();
  return c;
}

std::vector<char> file_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

// Every regular file under `dir`, relative path -> bytes.
std::map<std::string, std::vector<char>> tree_bytes(const fs::path& dir) {
  std::map<std::string, std::vector<char>> out;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), dir).string()] = file_bytes(e.path());
  }
  return out;
}

}  // namespace

TEST_CASE("run configuration keys") {
  pipeline::RunConfig c;
  pipeline::apply_key_values(c, io::parse_key_values("seed=11\nlambda=2.5\ndims=32\nprofile=desk\n"));
  CHECK(c.seed == 11);
  CHECK(c.lambda == 2.5);
  CHECK(c.generator().image_size == 32);
  CHECK(c.generator().grid_size == 8);
  CHECK_THROWS_AS(pipeline::apply_key_values(c, {{"sed", "1"}}), ConfigError);
  CHECK_THROWS_AS(pipeline::apply_key_values(c, {{"lr", "fast"}}), ConfigError);
  CHECK_THROWS_AS(pipeline::apply_key_values(c, {{"steps", "2.5"}}), ConfigError);
  c.dims = 30;
  CHECK_THROWS_AS(c.generator(), ConfigError);
  c.dims = 0;
  c.profile = "huge";
  CHECK_THROWS_AS(c.generator(), ConfigError);
  c.profile = "paper";
  CHECK(c.generator().image_size == 256);
}

TEST_CASE("generator settings round-trip through key=value metadata") {
  GeneratorConfig g;
  g.decoder_blocks = 3;
  g.use_refiner = false;
  const GeneratorConfig back = pipeline::generator_from_key_values(pipeline::to_key_values(g));
  CHECK(back.decoder_blocks == 3);
  CHECK_FALSE(back.use_refiner);
  CHECK(back.use_prev_path);
  auto kv = pipeline::to_key_values(g);
  kv["kind"] = "refiner";
  CHECK_THROWS_AS(pipeline::generator_from_key_values(kv), ConfigError);
  kv = pipeline::to_key_values(g);
  kv.erase("grid_size");
  CHECK_THROWS_AS(pipeline::generator_from_key_values(kv), ConfigError);
}

TEST_CASE("synthetic datasets need two driving frames and are reproducible") {
  testing::TempDir tmp("pipe_synth");
  pipeline::RunConfig c = small_run(tmp / "data");
  c.frames = 1;
  CHECK_THROWS_AS(pipeline::synthesize_dataset(c, tmp / "data"), ValidationError);
  c.frames = 2;
  pipeline::synthesize_dataset(c, tmp / "data");
  pipeline::synthesize_dataset(c, tmp / "again");
  const auto scenes = pipeline::dataset_scenes(tmp / "data");
  REQUIRE(scenes.size() == 2);
  const auto seq = io::read_sequence(scenes[0]);
  CHECK(seq.frames.size() == 3);
  CHECK(fs::exists(scenes[0] / "truth" / (io::frame_stem(2) + ".grid.dwt")));
  CHECK(fs::exists(scenes[0] / "truth" / (io::frame_stem(2) + ".mask.dwt")));
  CHECK(tree_bytes(tmp / "data") == tree_bytes(tmp / "again"));
  CHECK_THROWS_AS(pipeline::dataset_scenes(tmp / "missing"), IoError);
}

TEST_CASE("training zero steps writes the initialization") {
  testing::TempDir tmp("pipe_train0");
  pipeline::RunConfig c = small_run(tmp / "data");
  pipeline::synthesize_dataset(c, tmp / "data");
  c.steps = 0;
  const auto report = pipeline::train(c, tmp / "run");
  CHECK(report.losses.empty());
  auto loaded = pipeline::load_generator(tmp / "run" / "checkpoint");
  GeneratorNet<float> fresh(c.generator());
  fresh.init(c.seed);
  const auto a = loaded->parameters();
  const auto b = fresh.parameters();
  REQUIRE(a.size() == b.size());
  for (std::size_t k = 0; k < a.size(); ++k) CHECK(a[k]->value == b[k]->value);
  CHECK_THROWS_AS(pipeline::load_generator(tmp / "run" / "refiner"), ConfigError);
}

TEST_CASE("train, generate and evaluate end to end") {
  testing::TempDir tmp("pipe_e2e");
  pipeline::RunConfig c = small_run(tmp / "data");
  pipeline::synthesize_dataset(c, tmp / "data");
  const auto report = pipeline::train(c, tmp / "run");
  REQUIRE(report.losses.size() == 2);
  for (const auto& l : report.losses) CHECK(std::isfinite(l.total));
  CHECK(fs::exists(tmp / "run" / "losses.csv"));

  const fs::path scene = pipeline::dataset_scenes(tmp / "data")[0];
  CHECK(pipeline::generate(tmp / "run" / "checkpoint", scene, tmp / "one", 1) == 1);
  CHECK(fs::exists(tmp / "one" / (io::frame_stem(1) + ".img.dwt")));
  CHECK_FALSE(fs::exists(tmp / "one" / (io::frame_stem(2) + ".img.dwt")));
  CHECK(pipeline::generate(tmp / "run" / "checkpoint", scene, tmp / "all") == 3);

  // The written frames are the rollout of the loaded generator.
  auto net = pipeline::load_generator(tmp / "run" / "checkpoint");
  const auto seq = io::read_sequence(scene);
  const VideoSample v = seq.sample();
  std::vector<IuvMap> poses;
  for (const auto& f : v.driving) poses.push_back(f.iuv);
  const auto frames = rollout(*net, v.source, poses);
  for (int k = 0; k < 3; ++k) CHECK(io::read_feature_map(tmp / "all" / (io::frame_stem(k + 1) + ".img.dwt")).data == frames[k].data);

  // A sequence directory compared with itself skips the source frame.
  const auto same = pipeline::evaluate(scene, scene);
  CHECK(same.frames == 3);
  CHECK(same.perceptual == 0.0);
  REQUIRE(same.fid.has_value());
  CHECK(*same.fid <= 1e-6);
  REQUIRE(same.akd.has_value());
  CHECK(*same.akd == 0.0);

  const auto gen = pipeline::evaluate(scene, tmp / "all");
  CHECK(gen.perceptual > 0.0);
  CHECK_FALSE(gen.akd.has_value());
  CHECK_THROWS_AS(pipeline::evaluate(scene, tmp / "one"), ValidationError);
  CHECK_THROWS_AS(pipeline::evaluate(scene, tmp / "none"), IoError);
  const std::string json = pipeline::to_json(gen);
  const auto parsed = nlohmann::json::parse(json);
  CHECK(parsed.at("akd").is_null());
  CHECK(parsed.at("frames") == 3);
  CHECK(parsed.at("perceptual").get<double>() == gen.perceptual);
}

TEST_CASE("evaluate uses supplied embeddings") {
  testing::TempDir tmp("pipe_emb");
  pipeline::RunConfig c = small_run(tmp / "data");
  c.scenes = 1;
  pipeline::synthesize_dataset(c, tmp / "data");
  const fs::path scene = pipeline::dataset_scenes(tmp / "data")[0];
  io::Matrix a{2, 1, {-std::sqrt(2.0), std::sqrt(2.0)}};
  io::Matrix b{2, 1, {1 - std::sqrt(0.5), 1 + std::sqrt(0.5)}};
  io::write_matrix(tmp / "a.dwt", a);
  io::write_matrix(tmp / "b.dwt", b);
  const auto r = pipeline::evaluate(scene, scene, tmp / "a.dwt", tmp / "b.dwt");
  REQUIRE(r.fid.has_value());
  CHECK(*r.fid == doctest::Approx(2.0).epsilon(1e-9));
  CHECK_THROWS_AS(pipeline::evaluate(scene, scene, tmp / "a.dwt"), ConfigError);
}

TEST_CASE("warping a frame onto its own pose returns it") {
  testing::TempDir tmp("pipe_warp");
  pipeline::RunConfig c = small_run(tmp / "data");
  c.scenes = 1;
  pipeline::synthesize_dataset(c, tmp / "data");
  const auto seq = io::read_sequence(pipeline::dataset_scenes(tmp / "data")[0]);
  const Frame& s = seq.frames[0];
  const auto out = pipeline::warp_image(s.image, s.iuv, s.iuv);
  CHECK(out.warped.data == s.image.data);
  CHECK(out.grid.height() == 32);

  IuvMap bad = s.iuv;
  bad.u[0] = 2.f;
  bad.part[0] = 1;
  CHECK_THROWS_AS(pipeline::warp_image(s.image, bad, s.iuv), ValidationError);
  CHECK_THROWS_AS(pipeline::warp_image(s.image, s.iuv, s.iuv, tmp / "data"), IoError);
}
