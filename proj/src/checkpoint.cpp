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
#include "dwnet/checkpoint.hpp"

#include <cstdio>
#include <string>

namespace dwnet::io {
namespace {

std::string param_key(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "param_%04zu", i);
  return buf;
}

std::string describe(const nn::Param<float>& p) {
  std::string s = p.name + ":";
  for (std::size_t i = 0; i < p.shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(p.shape[i]);
  }
  return s;
}

std::vector<std::uint32_t> dims_of(const nn::Param<float>& p) {
  std::vector<std::uint32_t> d;
  for (int v : p.shape) d.push_back(static_cast<std::uint32_t>(v));
  return d;
}

}  // namespace

void write_checkpoint(const std::filesystem::path& dir, std::span<nn::Param<float>* const> params,
                      const KeyValues& metadata) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError(IoError::Kind::kOpen, "cannot create checkpoint directory " + dir.string());
  KeyValues manifest = metadata;
  manifest["params"] = std::to_string(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = *params[i];
    manifest[param_key(i)] = describe(p);
    write_tensor(dir / (param_key(i) + ".dwt"), Tensor::from<float>(std::span<const float>(p.value), dims_of(p)));
  }
  write_key_values(dir / "manifest.txt", manifest);
}

KeyValues read_checkpoint_metadata(const std::filesystem::path& dir) { return read_key_values(dir / "manifest.txt"); }

KeyValues read_checkpoint(const std::filesystem::path& dir, std::span<nn::Param<float>* const> params) {
  const KeyValues manifest = read_checkpoint_metadata(dir);
  const auto count = manifest.find("params");
  if (count == manifest.end()) throw ConfigError("checkpoint " + dir.string() + ": manifest lacks params=");
  if (count->second != std::to_string(params.size())) {
    throw ConfigError("checkpoint " + dir.string() + " holds " + count->second + " parameters, model has " +
                      std::to_string(params.size()));
  }
  std::vector<std::vector<float>> values(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto it = manifest.find(param_key(i));
    const std::string expected = describe(*params[i]);
    if (it == manifest.end() || it->second != expected) {
      throw ConfigError("checkpoint " + dir.string() + ": " + param_key(i) + " is " +
                        (it == manifest.end() ? std::string("missing") : it->second) + ", model expects " + expected);
    }
    const Tensor t = read_tensor(dir / (param_key(i) + ".dwt"));
    if (t.dtype != DType::kF32 || t.shape != dims_of(*params[i])) {
      throw ConfigError("checkpoint " + dir.string() + ": " + param_key(i) + ".dwt does not match its manifest entry");
    }
    values[i] = t.values<float>();
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = std::move(values[i]);
  return manifest;
}

}  // namespace dwnet::io
