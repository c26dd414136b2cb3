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
#include "dwnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>

#include "dwnet/rng.hpp"

namespace dwnet::synth {
namespace {

struct SurfacePoint {
  int part = 0;  // 1-based
  double u = 0, v = 0;
};

struct Vec2 {
  double x, y;
};

// Object coordinates of pixel (px, py) in pose m.
Vec2 to_object(const SyntheticScene& s, const RigidMotion& m, double px, double py) {
  const double dx = px - s.center_x - m.tx;
  const double dy = py - s.center_y - m.ty;
  const double c = std::cos(m.rotation), sn = std::sin(m.rotation);
  return {(c * dx + sn * dy) / m.scale, (-sn * dx + c * dy) / m.scale};
}

Vec2 to_image(const SyntheticScene& s, const RigidMotion& m, Vec2 q) {
  const double c = std::cos(m.rotation), sn = std::sin(m.rotation);
  return {s.center_x + m.tx + m.scale * (c * q.x - sn * q.y), s.center_y + m.ty + m.scale * (sn * q.x + c * q.y)};
}

std::optional<SurfacePoint> surface_at(const SyntheticScene& s, Vec2 q) {
  for (int p = static_cast<int>(s.parts.size()) - 1; p >= 0; --p) {
    const auto& e = s.parts[p];
    const double c = std::cos(e.angle), sn = std::sin(e.angle);
    const double dx = q.x - e.cx, dy = q.y - e.cy;
    const double lx = (c * dx + sn * dy) / e.ax;
    const double ly = (-sn * dx + c * dy) / e.ay;
    if (lx * lx + ly * ly <= 1.0) {
      return SurfacePoint{p + 1, std::clamp(0.5 * (lx + 1.0), 0.0, 1.0), std::clamp(0.5 * (ly + 1.0), 0.0, 1.0)};
    }
  }
  return std::nullopt;
}

float atlas_lookup(const SyntheticScene& s, int c, const SurfacePoint& sp) {
  const int n = s.atlas_size;
  const double fx = sp.u * (n - 1);
  const double fy = (sp.part - 1) * n + sp.v * (n - 1);
  const int x0 = std::min(static_cast<int>(fx), n - 2);
  const int row0 = (sp.part - 1) * n;
  const int y0 = std::min(static_cast<int>(fy), row0 + n - 2);
  const double ax = fx - x0, ay = fy - y0;
  const auto at = [&](int y, int x) { return static_cast<double>(s.atlas.at(c, y, x)); };
  const double top = (1 - ax) * at(y0, x0) + ax * at(y0, x0 + 1);
  const double bot = (1 - ax) * at(y0 + 1, x0) + ax * at(y0 + 1, x0 + 1);
  return static_cast<float>((1 - ay) * top + ay * bot);
}

void require_pose(const SyntheticScene& s, int frame) {
  if (frame < 0 || frame >= static_cast<int>(s.motion.size())) {
    throw ValidationError("synthetic scene has no pose " + std::to_string(frame));
  }
}

// Visible and total foreground pixel counts of a pose; the total is counted
// on a canvas extended by one full frame on every side.
std::pair<std::size_t, std::size_t> foreground_coverage(const SyntheticScene& s, int frame) {
  const RigidMotion& m = s.motion[frame];
  std::size_t visible = 0, total = 0;
  for (int y = -s.height; y < 2 * s.height; ++y) {
    for (int x = -s.width; x < 2 * s.width; ++x) {
      if (!surface_at(s, to_object(s, m, x, y))) continue;
      ++total;
      if (x >= 0 && x < s.width && y >= 0 && y < s.height) ++visible;
    }
  }
  return {visible, total};
}

// Smooth noise: a coarse lattice of N(0, 1) values, bilinearly interpolated.
std::vector<double> smooth_field(Rng& rng, int h, int w, double cell) {
  const int gh = static_cast<int>(std::ceil(h / cell)) + 2;
  const int gw = static_cast<int>(std::ceil(w / cell)) + 2;
  std::vector<double> lattice(static_cast<std::size_t>(gh) * gw);
  for (auto& v : lattice) v = rng.normal();
  std::vector<double> out(static_cast<std::size_t>(h) * w);
  for (int y = 0; y < h; ++y) {
    const double fy = y / cell;
    const int y0 = static_cast<int>(fy);
    const double ay = fy - y0;
    for (int x = 0; x < w; ++x) {
      const double fx = x / cell;
      const int x0 = static_cast<int>(fx);
      const double ax = fx - x0;
      const auto at = [&](int yy, int xx) { return lattice[static_cast<std::size_t>(yy) * gw + xx]; };
      out[static_cast<std::size_t>(y) * w + x] = (1 - ay) * ((1 - ax) * at(y0, x0) + ax * at(y0, x0 + 1)) +
                                                 ay * ((1 - ax) * at(y0 + 1, x0) + ax * at(y0 + 1, x0 + 1));
    }
  }
  return out;
}

FeatureMap render_source_image(const SyntheticScene& s) {
  FeatureMap img = s.background;
  const RigidMotion& m = s.motion[0];
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      const auto sp = surface_at(s, to_object(s, m, x, y));
      if (!sp) continue;
      for (int c = 0; c < s.channels; ++c) img.at(c, y, x) = atlas_lookup(s, c, *sp);
    }
  }
  return img;
}

}  // namespace

SyntheticScene make_static_scene(const SceneOptions& o, std::uint64_t seed) {
  if (o.height < 8 || o.width < 8) throw ValidationError("synthetic scenes need at least 8x8 pixels");
  if (o.min_parts < 1 || o.max_parts < o.min_parts || o.max_parts > kDefaultPartCount) {
    throw ValidationError("invalid part count range");
  }
  Rng rng = Rng::stream(seed, 0x5ce4e);
  SyntheticScene s;
  s.height = o.height;
  s.width = o.width;
  s.center_x = 0.5 * (o.width - 1);
  s.center_y = 0.5 * (o.height - 1);
  const double size = std::min(o.height, o.width);
  const int n_parts = static_cast<int>(rng.uniform_int(o.min_parts, o.max_parts));

  // A torso-like central part, then limbs attached around it.
  s.parts.push_back({0.0, 0.0, size * rng.uniform(0.13, 0.17), size * rng.uniform(0.18, 0.22),
                     rng.uniform(-0.3, 0.3)});
  for (int p = 1; p < n_parts; ++p) {
    const double a = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double r = size * rng.uniform(0.12, 0.2);
    s.parts.push_back({r * std::cos(a), r * std::sin(a), size * rng.uniform(0.06, 0.1),
                       size * rng.uniform(0.09, 0.14), rng.uniform(0.0, std::numbers::pi)});
  }

  std::vector<double> subject(s.channels);
  for (auto& b : subject) b = rng.uniform(-0.5, 0.5);
  s.atlas = FeatureMap(s.channels, n_parts * s.atlas_size, s.atlas_size);
  for (int p = 0; p < n_parts; ++p) {
    for (int c = 0; c < s.channels; ++c) {
      const double base = subject[c] + rng.uniform(-o.part_contrast, o.part_contrast);
      const double fu = o.texture_frequency * rng.uniform(0.5, 1.0);
      const double fv = o.texture_frequency * rng.uniform(0.5, 1.0);
      const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double amp = o.texture_amplitude * rng.uniform(0.5, 1.0);
      for (int iv = 0; iv < s.atlas_size; ++iv) {
        for (int iu = 0; iu < s.atlas_size; ++iu) {
          const double u = iu / double(s.atlas_size - 1), v = iv / double(s.atlas_size - 1);
          const double val = base + amp * std::cos(2.0 * std::numbers::pi * (fu * u + fv * v) + phase);
          s.atlas.at(c, p * s.atlas_size + iv, iu) = static_cast<float>(std::clamp(val, -1.0, 1.0));
        }
      }
    }
  }

  s.background = FeatureMap(s.channels, o.height, o.width);
  for (int c = 0; c < s.channels; ++c) {
    const double offset = o.background_contrast * rng.uniform(0.5, 1.0);
    const double base = subject[c] + (rng.uniform() < 0.5 ? -offset : offset);
    const double gx = rng.uniform(-0.2, 0.2), gy = rng.uniform(-0.2, 0.2);
    for (int y = 0; y < o.height; ++y) {
      for (int x = 0; x < o.width; ++x) {
        s.background.at(c, y, x) =
            static_cast<float>(base + gx * (x / double(o.width - 1) - 0.5) + gy * (y / double(o.height - 1) - 0.5));
      }
    }
  }
  s.motion.assign(static_cast<std::size_t>(std::max(o.frames, 0)) + 1, RigidMotion{});
  return s;
}

SyntheticScene make_random_scene(const SceneOptions& o, std::uint64_t seed) {
  SyntheticScene s = make_static_scene(o, seed);
  Rng rng = Rng::stream(seed, 0x307105);
  const double two_pi = 2.0 * std::numbers::pi;
  const double wt = rng.uniform(0.1, 0.3), pt = rng.uniform(0, two_pi), pty = rng.uniform(0, two_pi);
  const double ax = o.max_translation * rng.uniform(0.5, 1.0);
  const double ay = o.max_translation * rng.uniform(0.5, 1.0);
  const double wr = rng.uniform(0.1, 0.3), pr = rng.uniform(0, two_pi);
  const double ar = o.max_rotation * rng.uniform(0.5, 1.0);
  const double ws = rng.uniform(0.05, 0.2), ps = rng.uniform(0, two_pi);
  const double as = o.max_scale_change * rng.uniform(0.5, 1.0);
  for (std::size_t k = 0; k < s.motion.size(); ++k) {
    const double t = static_cast<double>(k);
    s.motion[k] = {ax * std::sin(wt * t + pt), ay * std::sin(wt * t + pty), ar * std::sin(wr * t + pr),
                   1.0 + as * std::sin(ws * t + ps)};
  }
  return s;
}

IuvMap render_iuv(const SyntheticScene& s, int frame) {
  require_pose(s, frame);
  IuvMap map(s.height, s.width);
  const RigidMotion& m = s.motion[frame];
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      const auto sp = surface_at(s, to_object(s, m, x, y));
      if (!sp) continue;
      const std::size_t i = map.index(y, x);
      map.part[i] = sp->part;
      map.u[i] = static_cast<float>(sp->u);
      map.v[i] = static_cast<float>(sp->v);
    }
  }
  return map;
}

std::vector<Keypoint> render_keypoints(const SyntheticScene& s, int frame) {
  require_pose(s, frame);
  std::vector<Keypoint> kps;
  for (const auto& e : s.parts) {
    const Vec2 p = to_image(s, s.motion[frame], {e.cx, e.cy});
    const bool inside = p.x >= 0 && p.x <= s.width - 1 && p.y >= 0 && p.y <= s.height - 1;
    kps.push_back({static_cast<float>(p.x), static_cast<float>(p.y), inside});
  }
  return kps;
}

WarpGrid ground_truth_grid(const SyntheticScene& s, int from_frame, int to_frame, std::vector<std::uint8_t>* mask) {
  require_pose(s, from_frame);
  require_pose(s, to_frame);
  WarpGrid g = identity_grid<float>(s.height, s.width);
  if (mask) mask->assign(static_cast<std::size_t>(s.height) * s.width, 0);
  const RigidMotion& from = s.motion[from_frame];
  const RigidMotion& to = s.motion[to_frame];
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) {
      const Vec2 q = to_object(s, to, x, y);
      if (!surface_at(s, q)) continue;
      const Vec2 p = to_image(s, from, q);
      g.x(y, x) = static_cast<float>(to_normalized(p.x, s.width));
      g.y(y, x) = static_cast<float>(to_normalized(p.y, s.height));
      if (mask) (*mask)[static_cast<std::size_t>(y) * s.width + x] = 1;
    }
  }
  return g;
}

SyntheticSequence generate_synthetic_sequence(const SyntheticScene& s, int n_frames, std::uint64_t seed) {
  if (n_frames < 2) throw ValidationError("synthetic sequences need at least 2 driving frames");
  if (static_cast<int>(s.motion.size()) < n_frames + 1) {
    throw ValidationError("scene defines " + std::to_string(s.motion.size()) + " poses, " +
                          std::to_string(n_frames + 1) + " needed");
  }
  if (s.parts.empty() || s.atlas.channels != s.channels || s.background.channels != s.channels ||
      s.background.height != s.height || s.background.width != s.width) {
    throw ValidationError("inconsistent synthetic scene");
  }
  for (int k = 0; k <= n_frames; ++k) {
    const auto [visible, total] = foreground_coverage(s, k);
    if (total == 0 || 2 * visible < total) {
      throw ValidationError("pose " + std::to_string(k) + " keeps " + std::to_string(visible) + " of " +
                            std::to_string(total) + " subject pixels in frame (need at least half)");
    }
  }

  Rng rng = Rng::stream(seed, 0x10e);
  auto make_iuv = [&](int frame) {
    IuvMap map = render_iuv(s, frame);
    if (s.uv_noise > 0.0) {
      const auto nu = smooth_field(rng, s.height, s.width, s.uv_noise_cell);
      const auto nv = smooth_field(rng, s.height, s.width, s.uv_noise_cell);
      for (std::size_t i = 0; i < map.size(); ++i) {
        if (map.part[i] == 0) continue;
        map.u[i] = static_cast<float>(std::clamp(map.u[i] + s.uv_noise * nu[i], 0.0, 1.0));
        map.v[i] = static_cast<float>(std::clamp(map.v[i] + s.uv_noise * nv[i], 0.0, 1.0));
      }
    }
    return map;
  };

  SyntheticSequence out;
  out.video.source.image = render_source_image(s);
  out.video.source.iuv = make_iuv(0);
  out.video.source.keypoints = render_keypoints(s, 0);
  for (int k = 1; k <= n_frames; ++k) {
    std::vector<std::uint8_t> mask;
    WarpGrid gt = ground_truth_grid(s, 0, k, &mask);
    const FeatureMap warped = bilinear_sample(out.video.source.image, gt);
    Frame f;
    f.image = s.background;
    for (std::size_t i = 0; i < mask.size(); ++i) {
      if (!mask[i]) continue;
      for (int c = 0; c < s.channels; ++c) f.image.data[c * mask.size() + i] = warped.data[c * mask.size() + i];
    }
    f.iuv = make_iuv(k);
    f.keypoints = render_keypoints(s, k);
    out.video.driving.push_back(std::move(f));
    out.ground_truth.push_back(std::move(gt));
    out.masks.push_back(std::move(mask));
  }
  return out;
}

}  // namespace dwnet::synth
