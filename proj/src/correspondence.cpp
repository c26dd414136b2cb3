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
#include "dwnet/correspondence.hpp"

#include <cmath>

namespace dwnet {

PartIndexUV PartIndexUV::build(const IuvMap& source, int n_parts) {
  PartIndexUV index;
  index.height_ = source.height;
  index.width_ = source.width;
  index.scan_order_.resize(static_cast<std::size_t>(std::max(n_parts, 0)));
  for (int y = 0; y < source.height; ++y) {
    for (int x = 0; x < source.width; ++x) {
      const std::size_t i = source.index(y, x);
      const int p = source.part[i];
      if (p < 1 || p > n_parts) continue;
      index.scan_order_[p - 1].push_back({source.u[i], source.v[i], x, y});
    }
  }
  index.trees_.reserve(index.scan_order_.size());
  for (const auto& list : index.scan_order_) index.trees_.emplace_back(list);
  return index;
}

CorrespondenceResult coarse_warp(const PartIndexUV& index, const IuvMap& driving) {
  CorrespondenceResult r;
  r.grid = identity_grid<float>(driving.height, driving.width);
  r.matched.assign(driving.size(), 0);
  r.match_distance.assign(driving.size(), 0.f);
  const int sh = index.source_height();
  const int sw = index.source_width();
  for (int y = 0; y < driving.height; ++y) {
    for (int x = 0; x < driving.width; ++x) {
      const std::size_t i = driving.index(y, x);
      const int p = driving.part[i];
      if (p < 1 || p > index.part_count()) continue;
      const UvKdTree& tree = index.tree(p);
      const auto hit = tree.nearest(driving.u[i], driving.v[i]);
      if (!hit) continue;
      const UvEntry& e = tree.entries()[hit->index];
      r.grid.x(y, x) = static_cast<float>(to_normalized(e.x, sw));
      r.grid.y(y, x) = static_cast<float>(to_normalized(e.y, sh));
      r.matched[i] = 1;
      r.match_distance[i] = static_cast<float>(std::sqrt(hit->distance2));
    }
  }
  return r;
}

DownsampledGrid downsample_grid(const CorrespondenceResult& result, int height, int width) {
  const int sh = result.grid.height();
  const int sw = result.grid.width();
  if (height < 1 || width < 1) throw ShapeError("downsample_grid: target size must be >= 1");
  if (height > sh || width > sw) {
    throw ShapeError("downsample_grid: target " + std::to_string(height) + "x" + std::to_string(width) +
                     " exceeds source " + std::to_string(sh) + "x" + std::to_string(sw));
  }
  const WarpGrid rel = to_relative(result.grid);
  DownsampledGrid out{identity_grid<float>(height, width), std::vector<std::uint8_t>(std::size_t(height) * width)};
  for (int y = 0; y < height; ++y) {
    const int yy = nearest_cell(y, height, sh);
    for (int x = 0; x < width; ++x) {
      const int xx = nearest_cell(x, width, sw);
      out.grid.x(y, x) += rel.x(yy, xx);
      out.grid.y(y, x) += rel.y(yy, xx);
      out.matched[std::size_t(y) * width + x] = result.matched[std::size_t(yy) * sw + xx];
    }
  }
  return out;
}

}  // namespace dwnet
