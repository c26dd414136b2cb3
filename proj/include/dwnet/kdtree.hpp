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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace dwnet {

// A source pixel keyed by its surface coordinates.
struct UvEntry {
  float u = 0.f;
  float v = 0.f;
  std::int32_t x = 0;
  std::int32_t y = 0;
};

// Squared UV distance as used for every nearest-neighbor decision.
inline double uv_distance2(float u0, float v0, float u1, float v1) {
  const double du = static_cast<double>(u0) - static_cast<double>(u1);
  const double dv = static_cast<double>(v0) - static_cast<double>(v1);
  return du * du + dv * dv;
}

// Strict total order on candidates: distance, then source row, then column.
inline bool closer(double d2, const UvEntry& a, double best_d2, const UvEntry& b) {
  if (d2 != best_d2) return d2 < best_d2;
  if (a.y != b.y) return a.y < b.y;
  return a.x < b.x;
}

// Exact 2-d tree over (u, v). Queries return the same entry as a linear scan
// under `closer`, including ties.
class UvKdTree {
 public:
  struct Hit {
    std::size_t index;  // into entries()
    double distance2;
  };

  UvKdTree() = default;
  explicit UvKdTree(std::vector<UvEntry> entries);

  std::optional<Hit> nearest(float u, float v) const;

  const std::vector<UvEntry>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  void build(std::size_t lo, std::size_t hi, int depth);
  void search(std::size_t lo, std::size_t hi, int depth, float u, float v, Hit& best, bool& found) const;

  // entries_ permuted into an implicit balanced tree: the node for [lo, hi)
  // sits at the midpoint and splits on u at even depth, v at odd depth.
  std::vector<UvEntry> entries_;
};

}  // namespace dwnet
