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
#include <string>
#include <vector>

#include "dwnet/tensor.hpp"

namespace dwnet {

// Body-part count of the dense-pose convention used throughout.
inline constexpr int kDefaultPartCount = 24;

// Per-pixel body-part index (0 = background) and surface coordinates in
// [0, 1]. (u, v) is meaningless where part == 0.
struct IuvMap {
  int height = 0;
  int width = 0;
  std::vector<std::int32_t> part;
  std::vector<float> u;
  std::vector<float> v;

  IuvMap() = default;
  IuvMap(int h, int w) : height(h), width(w), part(std::size_t(h) * w, 0), u(part.size(), 0.f), v(part.size(), 0.f) {}

  std::size_t size() const { return part.size(); }
  std::size_t index(int y, int x) const { return static_cast<std::size_t>(y) * width + x; }
  bool foreground(std::size_t i) const { return part[i] > 0; }
};

struct IuvViolation {
  enum class Kind { kPartOutOfRange, kUvOutOfRange };
  Kind kind;
  int x;
  int y;
};

struct IuvReport {
  std::vector<IuvViolation> violations;
  double background_fraction = 1.0;
  bool no_foreground = true;

  bool ok() const { return violations.empty(); }
  std::string describe() const;
};

// Lists pixels with a part outside [0, n_parts] and foreground pixels whose
// (u, v) is outside [0, 1] or non-finite, one entry per offending pixel.
IuvReport validate_iuv(const IuvMap& map, int n_parts = kDefaultPartCount);

// 3 x H x W planes: part / n_parts, u, v. u and v are zeroed on background.
FeatureMap iuv_planes(const IuvMap& map, int n_parts = kDefaultPartCount);

// Nearest-cell subsampling on the pixel-center lattice.
IuvMap downsample_iuv(const IuvMap& map, int height, int width);

// Source index along an axis for nearest-cell subsampling from `from` to `to`
// cells, consistent with the pixel-center coordinate convention.
int nearest_cell(int target_index, int to, int from);

std::vector<std::uint8_t> foreground_mask(const IuvMap& map);

}  // namespace dwnet
