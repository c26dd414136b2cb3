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
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dwnet/generator.hpp"
#include "dwnet/io.hpp"

namespace dwnet::pipeline {

// Settings shared by the batch commands. Precedence: defaults, then a
// key=value config file, then command-line flags.
struct RunConfig {
  std::string profile = "desk";  // desk | paper
  std::uint64_t seed = 7;
  int dims = 0;                  // image size; 0 = profile default
  double lambda = kDefaultLambda;
  double lr = 2e-4;
  double adv_weight = 1.0;
  int steps = 200;
  int scenes = 8;
  int frames = 32;  // driving frames per synthetic scene
  std::string data;
  std::string out;
  std::string refiner;
  std::string checkpoint;

  GeneratorConfig generator() const;
};

// Applies recognized keys; throws ConfigError on unknown keys or bad values.
void apply_key_values(RunConfig& config, const io::KeyValues& kv);
io::KeyValues to_key_values(const GeneratorConfig& g);
GeneratorConfig generator_from_key_values(const io::KeyValues& kv);

// Writes config.scenes synthetic sequences under `out`:
//   scene_%03d/ (sequence layout) with truth/%04d.grid.dwt and .mask.dwt
// per driving frame. Throws ValidationError when frames < 2.
void synthesize_dataset(const RunConfig& config, const std::filesystem::path& out);

// Sorted scene directories of a dataset.
std::vector<std::filesystem::path> dataset_scenes(const std::filesystem::path& data);

struct TrainReport {
  std::vector<StepLosses> losses;
};

// Trains on every scene of config.data for config.steps steps; writes
// checkpoint/, refiner/ and losses.csv under `out`.
TrainReport train(const RunConfig& config, const std::filesystem::path& out);

// Loads a generator checkpoint. Throws ConfigError on mismatches.
std::unique_ptr<GeneratorNet<float>> load_generator(const std::filesystem::path& checkpoint);

// Rolls out from frame 0 of `sequence` along the poses of its remaining
// frames (at most max_frames when positive) and writes %04d.img.dwt files.
// Returns the number of frames written.
int generate(const std::filesystem::path& checkpoint, const std::filesystem::path& sequence,
             const std::filesystem::path& out, int max_frames = 0);

struct EvaluationReport {
  double perceptual = 0.0;
  std::optional<double> fid;
  std::optional<double> akd;
  int frames = 0;
};

// Compares two frame directories (files *.img.dwt, optional *.kp.dwt, sorted
// by name; sequence directories are searched under frames/). FID uses the
// given embedding files, or pooled random-extractor features otherwise.
EvaluationReport evaluate(const std::filesystem::path& real, const std::filesystem::path& fake,
                          const std::filesystem::path& real_embeddings = {},
                          const std::filesystem::path& fake_embeddings = {});

std::string to_json(const EvaluationReport& r);

struct WarpOutputs {
  WarpGrid grid;
  std::vector<std::uint8_t> mask;
  FeatureMap warped;
};

// Coarse warp of `source_image` onto `driving_iuv`, refined with a refiner
// checkpoint when one is given. Throws ValidationError (with the validation
// report) on invalid dense pose.
WarpOutputs warp_image(const FeatureMap& source_image, const IuvMap& source_iuv, const IuvMap& driving_iuv,
                       const std::filesystem::path& refiner_checkpoint = {});

}  // namespace dwnet::pipeline
