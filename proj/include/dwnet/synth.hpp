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
#include <vector>

#include "dwnet/iuv.hpp"
#include "dwnet/tensor.hpp"
#include "dwnet/video.hpp"
#include "dwnet/warp.hpp"

namespace dwnet::synth {

// Elliptical body part in object coordinates (pixels, relative to the object
// center). Its (u, v) parameterization is the ellipse-aligned position
// rescaled to [0, 1]^2, so every surface point has a unique (u, v).
struct EllipsePart {
  double cx = 0, cy = 0;
  double ax = 1, ay = 1;  // semi-axes
  double angle = 0;       // radians
};

// Object pose in one frame: scale and rotate about the object center, then
// translate by (tx, ty) pixels.
struct RigidMotion {
  double tx = 0, ty = 0;
  double rotation = 0;
  double scale = 1;
};

struct SyntheticScene {
  int height = 64;
  int width = 64;
  int channels = 3;
  double center_x = 31.5;
  double center_y = 31.5;
  std::vector<EllipsePart> parts;  // part id = index + 1; later parts are drawn on top
  int atlas_size = 16;
  FeatureMap atlas;       // channels x (parts * atlas_size) x atlas_size, indexed by (v, u)
  FeatureMap background;  // channels x height x width, static
  std::vector<RigidMotion> motion;  // [0] = source pose, [k] = driving frame k
  // Smooth perturbation of rendered (u, v), mimicking an imperfect pose
  // estimator. Zero gives exact dense pose.
  double uv_noise = 0.0;
  double uv_noise_cell = 8.0;  // correlation length in pixels
};

struct SceneOptions {
  int height = 64;
  int width = 64;
  int frames = 32;  // driving frames; motion gets frames + 1 entries
  int min_parts = 2;
  int max_parts = 4;
  double max_translation = 5.0;  // pixels
  double max_rotation = 0.15;    // radians
  double max_scale_change = 0.05;
  double texture_amplitude = 0.06;
  double texture_frequency = 1.0;  // cycles per unit of (u, v)
  // Per-channel color offsets: each part's base color lies within
  // part_contrast of a common subject color, and the background base sits
  // between 0.5 and 1 times background_contrast away from it.
  double part_contrast = 0.1;
  double background_contrast = 0.15;
};

// Random layout, texture and background with every pose at rest.
SyntheticScene make_static_scene(const SceneOptions& options, std::uint64_t seed);

// Random layout plus a smooth random trajectory.
SyntheticScene make_random_scene(const SceneOptions& options, std::uint64_t seed);

struct SyntheticSequence {
  VideoSample video;
  // ground_truth[k] maps pixels of driving frame k + 1 to their location in
  // the source frame; masks[k] marks the driving foreground where it is defined.
  std::vector<WarpGrid> ground_truth;
  std::vector<std::vector<std::uint8_t>> masks;
};

// Renders the source frame analytically and each driving frame by bilinear
// resampling of the source along the exact correspondence, over a static
// background. Throws ValidationError when n_frames < 2, when the scene has
// too few poses, or when any pose leaves less than half of the subject in
// frame. `seed` drives the optional dense-pose noise.
SyntheticSequence generate_synthetic_sequence(const SyntheticScene& scene, int n_frames, std::uint64_t seed);

// Exact correspondence: pixels of pose `to_frame` -> positions in pose
// `from_frame`, identity off the foreground. mask (optional) receives the
// foreground of `to_frame`.
WarpGrid ground_truth_grid(const SyntheticScene& scene, int from_frame, int to_frame,
                           std::vector<std::uint8_t>* mask = nullptr);

// Noise-free dense pose of a pose index.
IuvMap render_iuv(const SyntheticScene& scene, int frame);

// Part centers mapped into a pose; visible when inside the canvas.
std::vector<Keypoint> render_keypoints(const SyntheticScene& scene, int frame);

}  // namespace dwnet::synth
