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
#include "dwnet/kdtree.hpp"
#include "dwnet/warp.hpp"

namespace dwnet {

// Source foreground pixels grouped by body part, each group searchable by UV.
class PartIndexUV {
 public:
  PartIndexUV() = default;

  // Parts outside [1, n_parts] are ignored.
  static PartIndexUV build(const IuvMap& source, int n_parts = kDefaultPartCount);

  int part_count() const { return static_cast<int>(trees_.size()); }
  // Entries of part p (1-based) in row-major source order... after build the
  // tree reorders them; use entries_in_scan_order for the original order.
  const UvKdTree& tree(int part) const { return trees_.at(static_cast<std::size_t>(part - 1)); }
  const std::vector<UvEntry>& entries_in_scan_order(int part) const {
    return scan_order_.at(static_cast<std::size_t>(part - 1));
  }
  int source_height() const { return height_; }
  int source_width() const { return width_; }

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<std::vector<UvEntry>> scan_order_;
  std::vector<UvKdTree> trees_;
};

struct CorrespondenceResult {
  // Absolute source coordinates per driving pixel, normalized to the source
  // image. Identity where unmatched.
  WarpGrid grid;
  std::vector<std::uint8_t> matched;
  std::vector<float> match_distance;  // UV distance; 0 where unmatched
};

// For every driving foreground pixel, the UV-nearest source pixel of the
// same part (ties: smallest source row, then column).
CorrespondenceResult coarse_warp(const PartIndexUV& index, const IuvMap& driving);

struct DownsampledGrid {
  WarpGrid grid;
  std::vector<std::uint8_t> matched;
};

// Nearest-cell subsampling of the relative shifts, re-expressed against the
// identity of the target size; identity grids stay exact and constant shifts
// stay constant. Throws ShapeError for empty targets or targets larger than
// the source grid.
DownsampledGrid downsample_grid(const CorrespondenceResult& result, int height, int width);

}  // namespace dwnet
