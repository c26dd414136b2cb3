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
#include "dwnet/iuv.hpp"

#include <cmath>
#include <sstream>

namespace dwnet {

std::string IuvReport::describe() const {
  std::ostringstream os;
  if (no_foreground) os << "no foreground\n";
  os << "background fraction: " << background_fraction << "\n";
  for (const auto& v : violations) {
    os << (v.kind == IuvViolation::Kind::kPartOutOfRange ? "part out of range" : "uv out of range") << " at (x="
       << v.x << ", y=" << v.y << ")\n";
  }
  return os.str();
}

IuvReport validate_iuv(const IuvMap& map, int n_parts) {
  IuvReport report;
  const std::size_t n = map.size();
  std::size_t background = 0;
  for (int y = 0; y < map.height; ++y) {
    for (int x = 0; x < map.width; ++x) {
      const std::size_t i = map.index(y, x);
      const int p = map.part[i];
      if (p < 0 || p > n_parts) {
        report.violations.push_back({IuvViolation::Kind::kPartOutOfRange, x, y});
        continue;
      }
      if (p == 0) {
        ++background;
        continue;
      }
      const float u = map.u[i];
      const float v = map.v[i];
      const bool bad = !(std::isfinite(u) && std::isfinite(v)) || u < 0.f || u > 1.f || v < 0.f || v > 1.f;
      if (bad) report.violations.push_back({IuvViolation::Kind::kUvOutOfRange, x, y});
    }
  }
  report.background_fraction = n ? static_cast<double>(background) / static_cast<double>(n) : 1.0;
  report.no_foreground = background == n;
  return report;
}

FeatureMap iuv_planes(const IuvMap& map, int n_parts) {
  FeatureMap planes(3, map.height, map.width);
  const float inv = 1.f / static_cast<float>(n_parts);
  const std::size_t n = map.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (map.part[i] <= 0) continue;
    planes.data[i] = static_cast<float>(map.part[i]) * inv;
    planes.data[n + i] = map.u[i];
    planes.data[2 * n + i] = map.v[i];
  }
  return planes;
}

int nearest_cell(int target_index, int to, int from) {
  if (to <= 1) return (from - 1) / 2;
  const double pos = static_cast<double>(target_index) * (from - 1) / static_cast<double>(to - 1);
  return static_cast<int>(std::lround(pos));
}

IuvMap downsample_iuv(const IuvMap& map, int height, int width) {
  if (height < 1 || width < 1) throw ShapeError("downsample_iuv: target size must be >= 1");
  IuvMap out(height, width);
  for (int y = 0; y < height; ++y) {
    const int sy = nearest_cell(y, height, map.height);
    for (int x = 0; x < width; ++x) {
      const int sx = nearest_cell(x, width, map.width);
      const std::size_t s = map.index(sy, sx);
      const std::size_t d = out.index(y, x);
      out.part[d] = map.part[s];
      out.u[d] = map.u[s];
      out.v[d] = map.v[s];
    }
  }
  return out;
}

std::vector<std::uint8_t> foreground_mask(const IuvMap& map) {
  std::vector<std::uint8_t> m(map.size());
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = map.part[i] > 0 ? 1 : 0;
  return m;
}

}  // namespace dwnet
