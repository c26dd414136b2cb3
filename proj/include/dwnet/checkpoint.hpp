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
#include <span>

#include "dwnet/io.hpp"
#include "dwnet/nn.hpp"

namespace dwnet::io {

// Checkpoint directory:
//   manifest.txt        caller metadata plus params=<count> and one
//                       param_%04d=<name>:<shape> line per parameter
//   param_%04d.dwt      f32 values in the parameter's shape
void write_checkpoint(const std::filesystem::path& dir, std::span<nn::Param<float>* const> params,
                      const KeyValues& metadata = {});

// Reads the manifest only.
KeyValues read_checkpoint_metadata(const std::filesystem::path& dir);

// Loads values into `params`. Throws ConfigError when the parameter count,
// names or shapes differ from the checkpoint; nothing is modified then.
KeyValues read_checkpoint(const std::filesystem::path& dir, std::span<nn::Param<float>* const> params);

}  // namespace dwnet::io
