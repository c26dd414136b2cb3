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

#include <vector>

#include "dwnet/iuv.hpp"
#include "dwnet/tensor.hpp"

namespace dwnet {

struct Keypoint {
  float x = 0.f;  // pixels
  float y = 0.f;
  bool visible = false;
};

// One video frame: image in [-1, 1] (C x H x W), its dense pose, and
// optional keypoints.
struct Frame {
  FeatureMap image;
  IuvMap iuv;
  std::vector<Keypoint> keypoints;
};

// A source frame plus the driving frames to transfer its appearance onto.
struct VideoSample {
  Frame source;
  std::vector<Frame> driving;

  // All frames with the source first; the ordering used on disk.
  std::vector<Frame> frames() const {
    std::vector<Frame> out;
    out.reserve(driving.size() + 1);
    out.push_back(source);
    out.insert(out.end(), driving.begin(), driving.end());
    return out;
  }
};

}  // namespace dwnet
