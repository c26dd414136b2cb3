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
#include "dwnet/kdtree.hpp"

#include <algorithm>

namespace dwnet {
namespace {

float key(const UvEntry& e, int depth) { return depth % 2 == 0 ? e.u : e.v; }

}  // namespace

UvKdTree::UvKdTree(std::vector<UvEntry> entries) : entries_(std::move(entries)) {
  build(0, entries_.size(), 0);
}

void UvKdTree::build(std::size_t lo, std::size_t hi, int depth) {
  if (hi - lo <= 1) return;
  const std::size_t mid = lo + (hi - lo) / 2;
  std::nth_element(entries_.begin() + lo, entries_.begin() + mid, entries_.begin() + hi,
                   [depth](const UvEntry& a, const UvEntry& b) { return key(a, depth) < key(b, depth); });
  build(lo, mid, depth + 1);
  build(mid + 1, hi, depth + 1);
}

std::optional<UvKdTree::Hit> UvKdTree::nearest(float u, float v) const {
  if (entries_.empty()) return std::nullopt;
  Hit best{0, 0.0};
  bool found = false;
  search(0, entries_.size(), 0, u, v, best, found);
  return best;
}

void UvKdTree::search(std::size_t lo, std::size_t hi, int depth, float u, float v, Hit& best, bool& found) const {
  if (lo >= hi) return;
  const std::size_t mid = lo + (hi - lo) / 2;
  const UvEntry& node = entries_[mid];
  const double d2 = uv_distance2(u, v, node.u, node.v);
  if (!found || closer(d2, node, best.distance2, entries_[best.index])) {
    best = {mid, d2};
    found = true;
  }
  const double diff = static_cast<double>(depth % 2 == 0 ? u : v) - static_cast<double>(key(node, depth));
  const bool left_first = diff < 0.0;
  if (left_first) {
    search(lo, mid, depth + 1, u, v, best, found);
  } else {
    search(mid + 1, hi, depth + 1, u, v, best, found);
  }
  // Everything across the split is at least |diff| away; equality must still
  // be visited because of the tie-break.
  if (diff * diff <= best.distance2) {
    if (left_first) {
      search(mid + 1, hi, depth + 1, u, v, best, found);
    } else {
      search(lo, mid, depth + 1, u, v, best, found);
    }
  }
}

}  // namespace dwnet
