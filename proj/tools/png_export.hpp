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

#include <filesystem>

#include "dwnet/tensor.hpp"

namespace dwnet::tools {

// 8-bit PNG of an image in [-1, 1]; 1 channel gives grayscale, 3 or more
// give RGB from the first three channels.
void write_png(const std::filesystem::path& path, const FeatureMap& image);

}  // namespace dwnet::tools
