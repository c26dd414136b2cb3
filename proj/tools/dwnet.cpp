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
// dwnet: batch front end for synthesis, warping, training, generation and
// evaluation.
//
// Exit codes: 0 success, 1 other failure, 2 I/O, 3 validation,
// 4 configuration or checkpoint mismatch.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "dwnet/io.hpp"
#include "dwnet/pipeline.hpp"
#include "png_export.hpp"

namespace fs = std::filesystem;
using dwnet::pipeline::RunConfig;

namespace {

enum ExitCode { kOk = 0, kFailure = 1, kIo = 2, kValidation = 3, kConfig = 4 };

// Flags that override the config file when given.
struct CommonFlags {
  std::string config_file;
  std::optional<std::string> profile;
  std::optional<std::uint64_t> seed;
  std::optional<int> dims;
  std::optional<double> lambda;
  std::optional<double> lr;
  std::optional<double> adv_weight;
  std::optional<int> steps;
  std::optional<int> scenes;
  std::optional<int> frames;
  std::optional<std::string> data;
  std::optional<std::string> out;
  std::optional<std::string> refiner;
  std::optional<std::string> checkpoint;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_file, "key=value config file (flags override it)");
  cmd->add_option("--profile", f.profile, "desk | paper");
  cmd->add_option("--seed", f.seed, "random seed");
  cmd->add_option("--dims", f.dims, "image size in pixels (multiple of 4)");
}

RunConfig resolve(const CommonFlags& f) {
  RunConfig c;
  if (!f.config_file.empty()) dwnet::pipeline::apply_key_values(c, dwnet::io::read_key_values(f.config_file));
  if (f.profile) c.profile = *f.profile;
  if (f.seed) c.seed = *f.seed;
  if (f.dims) c.dims = *f.dims;
  if (f.lambda) c.lambda = *f.lambda;
  if (f.lr) c.lr = *f.lr;
  if (f.adv_weight) c.adv_weight = *f.adv_weight;
  if (f.steps) c.steps = *f.steps;
  if (f.scenes) c.scenes = *f.scenes;
  if (f.frames) c.frames = *f.frames;
  if (f.data) c.data = *f.data;
  if (f.out) c.out = *f.out;
  if (f.refiner) c.refiner = *f.refiner;
  if (f.checkpoint) c.checkpoint = *f.checkpoint;
  return c;
}

fs::path required(const std::string& value, const char* flag) {
  if (value.empty()) throw dwnet::ConfigError(std::string(flag) + " is required");
  return value;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"dense-correspondence warping and pose-guided video synthesis"};
  app.require_subcommand(1);
  CommonFlags flags;

  auto* synth = app.add_subcommand("synth", "write synthetic sequences with ground-truth warps");
  add_common(synth, flags);
  synth->add_option("--out", flags.out, "output dataset directory");
  synth->add_option("--scenes", flags.scenes, "number of scenes (default 8)");
  synth->add_option("--frames", flags.frames, "driving frames per scene, >= 2 (default 32)");

  std::string source_img, source_iuv, driving_iuv;
  auto* warp = app.add_subcommand("warp", "coarse (optionally refined) warp of a source image onto a driving pose");
  warp->add_option("--source-img", source_img, "source image .dwt")->required();
  warp->add_option("--source-iuv", source_iuv, "source dense pose .dwt")->required();
  warp->add_option("--driving-iuv", driving_iuv, "driving dense pose .dwt")->required();
  warp->add_option("--refiner", flags.refiner, "refiner checkpoint directory");
  warp->add_option("--out", flags.out, "output directory");
  bool warp_png = false;
  warp->add_flag("--png", warp_png, "also write warped.png");

  auto* train = app.add_subcommand("train", "train generator and critic on a synthetic dataset");
  add_common(train, flags);
  train->add_option("--data", flags.data, "dataset directory");
  train->add_option("--out", flags.out, "output directory");
  train->add_option("--steps", flags.steps, "training steps (default 200)");
  train->add_option("--lambda", flags.lambda, "reconstruction weight (default 10)");
  train->add_option("--lr", flags.lr, "initial learning rate (default 0.0002)");
  train->add_option("--adv-weight", flags.adv_weight, "adversarial weight (default 1)");

  std::string sequence;
  int max_frames = 0;
  bool gen_png = false;
  auto* generate = app.add_subcommand("generate", "markovian rollout along a sequence's driving poses");
  generate->add_option("--checkpoint", flags.checkpoint, "generator checkpoint directory");
  generate->add_option("--sequence", sequence, "sequence directory providing source frame and poses")->required();
  generate->add_option("--out", flags.out, "output directory");
  generate->add_option("--frames", max_frames, "generate at most this many frames");
  generate->add_flag("--png", gen_png, "also write PNG copies");

  std::string real_dir, fake_dir, real_emb, fake_emb, report_path;
  auto* evaluate = app.add_subcommand("evaluate", "perceptual distance, FID and AKD between frame sets");
  evaluate->add_option("--real", real_dir, "reference frames or sequence directory")->required();
  evaluate->add_option("--fake", fake_dir, "generated frames directory")->required();
  evaluate->add_option("--real-embeddings", real_emb, "n x d embedding .dwt for the reference set");
  evaluate->add_option("--fake-embeddings", fake_emb, "n x d embedding .dwt for the generated set");
  evaluate->add_option("--report", report_path, "also write the JSON report here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*synth) {
      const RunConfig c = resolve(flags);
      dwnet::pipeline::synthesize_dataset(c, required(c.out, "--out"));
    } else if (*warp) {
      const RunConfig c = resolve(flags);
      const fs::path out = required(c.out, "--out");
      const auto result = dwnet::pipeline::warp_image(dwnet::io::read_feature_map(source_img),
                                                      dwnet::io::read_iuv(source_iuv),
                                                      dwnet::io::read_iuv(driving_iuv), c.refiner);
      std::error_code ec;
      fs::create_directories(out, ec);
      if (ec) throw dwnet::IoError(dwnet::IoError::Kind::kOpen, "cannot create " + out.string());
      dwnet::io::write_grid(out / "grid.dwt", result.grid);
      dwnet::io::write_mask(out / "mask.dwt", result.mask, result.grid.height(), result.grid.width());
      dwnet::io::write_feature_map(out / "warped.dwt", result.warped);
      if (warp_png) dwnet::tools::write_png(out / "warped.png", result.warped);
    } else if (*train) {
      const RunConfig c = resolve(flags);
      const auto report = dwnet::pipeline::train(c, required(c.out, "--out"));
      if (!report.losses.empty()) {
        const auto& l = report.losses.back();
        std::printf("step %zu d_loss %.6g g_loss %.6g rec_loss %.6g total %.6g\n", report.losses.size(), l.d_loss,
                    l.g_loss, l.rec_loss, l.total);
      }
    } else if (*generate) {
      const RunConfig c = resolve(flags);
      const fs::path out = required(c.out, "--out");
      const int n = dwnet::pipeline::generate(required(c.checkpoint, "--checkpoint"), sequence, out, max_frames);
      if (gen_png) {
        for (int k = 1; k <= n; ++k) {
          const std::string stem = dwnet::io::frame_stem(k);
          dwnet::tools::write_png(out / (stem + ".png"), dwnet::io::read_feature_map(out / (stem + ".img.dwt")));
        }
      }
      std::printf("generated %d frames\n", n);
    } else if (*evaluate) {
      const auto r = dwnet::pipeline::evaluate(real_dir, fake_dir, real_emb, fake_emb);
      const std::string json = dwnet::pipeline::to_json(r);
      std::cout << json << "\n";
      if (!report_path.empty()) {
        std::ofstream f(report_path);
        f << json << "\n";
        if (!f) throw dwnet::IoError(dwnet::IoError::Kind::kOpen, "cannot write " + report_path);
      }
    }
  } catch (const dwnet::IoError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kIo;
  } catch (const dwnet::ValidationError& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kValidation;
  } catch (const dwnet::ShapeError& e) {
    std::fprintf(stderr, "invalid input: %s\n", e.what());
    return kValidation;
  } catch (const dwnet::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return kConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kOk;
}
