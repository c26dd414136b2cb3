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
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dwnet/iuv.hpp"
#include "dwnet/tensor.hpp"
#include "dwnet/video.hpp"
#include "dwnet/warp.hpp"

namespace dwnet::io {

// Tensor container (.dwt):
//   8 bytes  magic "DWTENS01"
//   1 byte   dtype (0 f32, 1 f64, 2 i32, 3 u8)
//   1 byte   rank
//   rank x   little-endian u32 dims
//   payload  little-endian, row-major
enum class DType : std::uint8_t { kF32 = 0, kF64 = 1, kI32 = 2, kU8 = 3 };

inline constexpr char kMagic[8] = {'D', 'W', 'T', 'E', 'N', 'S', '0', '1'};

std::size_t dtype_size(DType t);
const char* dtype_name(DType t);

struct Tensor {
  DType dtype = DType::kF32;
  std::vector<std::uint32_t> shape;       // empty => scalar
  std::vector<std::uint8_t> payload;      // host byte order

  std::size_t element_count() const;

  template <typename T>
  static Tensor from(std::span<const T> values, std::vector<std::uint32_t> shape);

  // Typed copy of the payload. Throws kDtypeMismatch when T does not match.
  template <typename T>
  std::vector<T> values() const;

  bool operator==(const Tensor&) const = default;
};

std::vector<std::uint8_t> encode(const Tensor& t);
Tensor decode(std::span<const std::uint8_t> bytes);

void write_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor read_tensor(const std::filesystem::path& path);

// Typed views over the container.
void write_feature_map(const std::filesystem::path& path, const FeatureMap& m);
FeatureMap read_feature_map(const std::filesystem::path& path);

// IUV maps are three stacked f32 planes: part (as float), u, v.
void write_iuv(const std::filesystem::path& path, const IuvMap& m);
IuvMap read_iuv(const std::filesystem::path& path);

// Grids are 2 x H x W (x plane, y plane) in normalized coordinates.
void write_grid(const std::filesystem::path& path, const WarpGrid& g);
WarpGrid read_grid(const std::filesystem::path& path);

// Masks are 1 x H x W u8.
void write_mask(const std::filesystem::path& path, const std::vector<std::uint8_t>& mask, int height, int width);
std::vector<std::uint8_t> read_mask(const std::filesystem::path& path, int* height = nullptr, int* width = nullptr);

// Keypoints for one frame: K x 3 f32 (x, y, visible).
void write_keypoints(const std::filesystem::path& path, const std::vector<Keypoint>& kps);
std::vector<Keypoint> read_keypoints(const std::filesystem::path& path);

// Keypoint track: F x K x 3 f32.
void write_keypoint_track(const std::filesystem::path& path, const std::vector<std::vector<Keypoint>>& track);
std::vector<std::vector<Keypoint>> read_keypoint_track(const std::filesystem::path& path);

// n x d embedding matrix, stored f32 or f64, returned as doubles.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;
};
void write_matrix(const std::filesystem::path& path, const Matrix& m);
Matrix read_matrix(const std::filesystem::path& path);

// UTF-8 key=value lines; '#' starts a comment line.
using KeyValues = std::map<std::string, std::string>;
KeyValues parse_key_values(const std::string& text);
KeyValues read_key_values(const std::filesystem::path& path);
void write_key_values(const std::filesystem::path& path, const KeyValues& kv);

// Sequence directory layout:
//   manifest.txt            source=<index>, frames=<count>
//   frames/%04d.img.dwt     image
//   frames/%04d.iuv.dwt     dense pose
//   frames/%04d.kp.dwt      keypoints (optional)
struct StoredSequence {
  int source_index = 0;
  std::vector<Frame> frames;

  VideoSample sample() const;
};

std::string frame_stem(int index);
void write_sequence(const std::filesystem::path& dir, const VideoSample& video);
StoredSequence read_sequence(const std::filesystem::path& dir);

}  // namespace dwnet::io
