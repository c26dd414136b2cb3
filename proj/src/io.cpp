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
#include "dwnet/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <sstream>

namespace dwnet::io {
namespace fs = std::filesystem;

namespace {

template <typename T>
constexpr DType dtype_of();
template <>
constexpr DType dtype_of<float>() { return DType::kF32; }
template <>
constexpr DType dtype_of<double>() { return DType::kF64; }
template <>
constexpr DType dtype_of<std::int32_t>() { return DType::kI32; }
template <>
constexpr DType dtype_of<std::uint8_t>() { return DType::kU8; }

// Payload bytes are kept in host order in memory and swapped at the file
// boundary on big-endian hosts.
void swap_payload(std::vector<std::uint8_t>& bytes, std::size_t elem) {
  if constexpr (std::endian::native == std::endian::big) {
    for (std::size_t i = 0; i + elem <= bytes.size(); i += elem) std::reverse(bytes.begin() + i, bytes.begin() + i + elem);
  } else {
    (void)bytes;
    (void)elem;
  }
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(static_cast<std::uint8_t>(v >> (8 * b)));
}

std::string where(const fs::path& p) { return p.string() + ": "; }

Tensor expect(const fs::path& path, DType dtype, std::size_t rank) {
  Tensor t = read_tensor(path);
  if (t.dtype != dtype) {
    throw IoError(IoError::Kind::kDtypeMismatch, where(path) + "dtype mismatch: expected " +
                                                      dtype_name(dtype) + ", found " + dtype_name(t.dtype));
  }
  if (t.shape.size() != rank) {
    throw IoError(IoError::Kind::kShapeMismatch, where(path) + "shape mismatch: expected rank " +
                                                      std::to_string(rank) + ", found " +
                                                      std::to_string(t.shape.size()));
  }
  return t;
}

}  // namespace

std::size_t dtype_size(DType t) {
  switch (t) {
    case DType::kF32: return 4;
    case DType::kF64: return 8;
    case DType::kI32: return 4;
    case DType::kU8: return 1;
  }
  throw IoError(IoError::Kind::kDtypeMismatch, "unknown dtype code " + std::to_string(int(t)));
}

const char* dtype_name(DType t) {
  switch (t) {
    case DType::kF32: return "f32";
    case DType::kF64: return "f64";
    case DType::kI32: return "i32";
    case DType::kU8: return "u8";
  }
  return "unknown";
}

std::size_t Tensor::element_count() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

template <typename T>
Tensor Tensor::from(std::span<const T> values, std::vector<std::uint32_t> shape) {
  Tensor t;
  t.dtype = dtype_of<T>();
  t.shape = std::move(shape);
  if (t.element_count() != values.size()) {
    throw IoError(IoError::Kind::kShapeMismatch, "tensor: shape does not match value count");
  }
  t.payload.resize(values.size() * sizeof(T));
  if (!values.empty()) std::memcpy(t.payload.data(), values.data(), t.payload.size());
  return t;
}

template <typename T>
std::vector<T> Tensor::values() const {
  if (dtype != dtype_of<T>()) {
    throw IoError(IoError::Kind::kDtypeMismatch,
                  std::string("dtype mismatch: stored ") + dtype_name(dtype) + ", requested " +
                      dtype_name(dtype_of<T>()));
  }
  std::vector<T> out(element_count());
  if (!out.empty()) std::memcpy(out.data(), payload.data(), out.size() * sizeof(T));
  return out;
}

template Tensor Tensor::from<float>(std::span<const float>, std::vector<std::uint32_t>);
template Tensor Tensor::from<double>(std::span<const double>, std::vector<std::uint32_t>);
template Tensor Tensor::from<std::int32_t>(std::span<const std::int32_t>, std::vector<std::uint32_t>);
template Tensor Tensor::from<std::uint8_t>(std::span<const std::uint8_t>, std::vector<std::uint32_t>);
template std::vector<float> Tensor::values<float>() const;
template std::vector<double> Tensor::values<double>() const;
template std::vector<std::int32_t> Tensor::values<std::int32_t>() const;
template std::vector<std::uint8_t> Tensor::values<std::uint8_t>() const;

std::vector<std::uint8_t> encode(const Tensor& t) {
  if (t.shape.size() > 255) throw IoError(IoError::Kind::kShapeMismatch, "tensor rank exceeds 255");
  const std::size_t elem = dtype_size(t.dtype);
  if (t.payload.size() != t.element_count() * elem) {
    throw IoError(IoError::Kind::kShapeMismatch, "tensor payload size does not match shape");
  }
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  out.push_back(static_cast<std::uint8_t>(t.dtype));
  out.push_back(static_cast<std::uint8_t>(t.shape.size()));
  for (auto d : t.shape) put_u32(out, d);
  std::vector<std::uint8_t> payload = t.payload;
  swap_payload(payload, elem);
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Tensor decode(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < sizeof(kMagic) || !std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw IoError(IoError::Kind::kBadMagic, "bad magic: not a DWTENS01 tensor container");
  }
  std::size_t pos = sizeof(kMagic);
  if (bytes.size() < pos + 2) throw IoError(IoError::Kind::kTruncated, "truncated header");
  const std::uint8_t code = bytes[pos++];
  if (code > 3) throw IoError(IoError::Kind::kDtypeMismatch, "unknown dtype code " + std::to_string(code));
  Tensor t;
  t.dtype = static_cast<DType>(code);
  const std::size_t rank = bytes[pos++];
  if (bytes.size() < pos + 4 * rank) throw IoError(IoError::Kind::kTruncated, "truncated header dims");
  for (std::size_t r = 0; r < rank; ++r) {
    std::uint32_t d = 0;
    for (int b = 0; b < 4; ++b) d |= static_cast<std::uint32_t>(bytes[pos + b]) << (8 * b);
    pos += 4;
    t.shape.push_back(d);
  }
  const std::size_t need = t.element_count() * dtype_size(t.dtype);
  if (bytes.size() - pos < need) {
    throw IoError(IoError::Kind::kTruncated, "truncated payload: expected " + std::to_string(need) +
                                                 " bytes, found " + std::to_string(bytes.size() - pos));
  }
  if (bytes.size() - pos > need) {
    throw IoError(IoError::Kind::kFormat, "trailing bytes after payload");
  }
  t.payload.assign(bytes.begin() + pos, bytes.end());
  swap_payload(t.payload, dtype_size(t.dtype));
  return t;
}

void write_tensor(const fs::path& path, const Tensor& t) {
  const auto bytes = encode(t);
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError(IoError::Kind::kOpen, where(path) + "cannot open for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError(IoError::Kind::kOpen, where(path) + "write failed");
}

Tensor read_tensor(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError(IoError::Kind::kOpen, where(path) + "cannot open for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  try {
    return decode(bytes);
  } catch (const IoError& e) {
    throw IoError(e.kind(), where(path) + e.what());
  }
}

void write_feature_map(const fs::path& path, const FeatureMap& m) {
  write_tensor(path, Tensor::from<float>(m.data, {std::uint32_t(m.channels), std::uint32_t(m.height),
                                                  std::uint32_t(m.width)}));
}

FeatureMap read_feature_map(const fs::path& path) {
  const Tensor t = expect(path, DType::kF32, 3);
  FeatureMap m(int(t.shape[0]), int(t.shape[1]), int(t.shape[2]));
  m.data = t.values<float>();
  return m;
}

void write_iuv(const fs::path& path, const IuvMap& m) {
  FeatureMap planes(3, m.height, m.width);
  const std::size_t n = m.size();
  for (std::size_t i = 0; i < n; ++i) {
    planes.data[i] = static_cast<float>(m.part[i]);
    planes.data[n + i] = m.u[i];
    planes.data[2 * n + i] = m.v[i];
  }
  write_feature_map(path, planes);
}

IuvMap read_iuv(const fs::path& path) {
  const FeatureMap planes = read_feature_map(path);
  if (planes.channels != 3) {
    throw IoError(IoError::Kind::kShapeMismatch, where(path) + "IUV map must have 3 planes, found " +
                                                      std::to_string(planes.channels));
  }
  IuvMap m(planes.height, planes.width);
  const std::size_t n = m.size();
  for (std::size_t i = 0; i < n; ++i) {
    const float p = planes.data[i];
    // Non-integral labels become -1 so that validation reports them.
    const bool integral = std::isfinite(p) && p == std::nearbyint(p) && std::abs(p) < 1e6f;
    m.part[i] = integral ? static_cast<std::int32_t>(p) : -1;
    m.u[i] = planes.data[n + i];
    m.v[i] = planes.data[2 * n + i];
  }
  return m;
}

void write_grid(const fs::path& path, const WarpGrid& g) { write_feature_map(path, g.coords); }

WarpGrid read_grid(const fs::path& path) {
  FeatureMap m = read_feature_map(path);
  if (m.channels != 2) {
    throw IoError(IoError::Kind::kShapeMismatch, where(path) + "grid must have 2 planes");
  }
  return WarpGrid(std::move(m));
}

void write_mask(const fs::path& path, const std::vector<std::uint8_t>& mask, int height, int width) {
  write_tensor(path, Tensor::from<std::uint8_t>(mask, {1u, std::uint32_t(height), std::uint32_t(width)}));
}

std::vector<std::uint8_t> read_mask(const fs::path& path, int* height, int* width) {
  const Tensor t = expect(path, DType::kU8, 3);
  if (height) *height = int(t.shape[1]);
  if (width) *width = int(t.shape[2]);
  return t.values<std::uint8_t>();
}

void write_keypoints(const fs::path& path, const std::vector<Keypoint>& kps) {
  std::vector<float> v;
  for (const auto& k : kps) {
    v.push_back(k.x);
    v.push_back(k.y);
    v.push_back(k.visible ? 1.f : 0.f);
  }
  write_tensor(path, Tensor::from<float>(v, {std::uint32_t(kps.size()), 3u}));
}

std::vector<Keypoint> read_keypoints(const fs::path& path) {
  const Tensor t = expect(path, DType::kF32, 2);
  if (t.shape[1] != 3) throw IoError(IoError::Kind::kShapeMismatch, where(path) + "keypoints must be K x 3");
  const auto v = t.values<float>();
  std::vector<Keypoint> out(t.shape[0]);
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = {v[3 * k], v[3 * k + 1], v[3 * k + 2] > 0.5f};
  return out;
}

void write_keypoint_track(const fs::path& path, const std::vector<std::vector<Keypoint>>& track) {
  const std::size_t k = track.empty() ? 0 : track.front().size();
  std::vector<float> v;
  for (const auto& frame : track) {
    if (frame.size() != k) throw IoError(IoError::Kind::kShapeMismatch, "keypoint track: ragged frames");
    for (const auto& p : frame) {
      v.push_back(p.x);
      v.push_back(p.y);
      v.push_back(p.visible ? 1.f : 0.f);
    }
  }
  write_tensor(path, Tensor::from<float>(v, {std::uint32_t(track.size()), std::uint32_t(k), 3u}));
}

std::vector<std::vector<Keypoint>> read_keypoint_track(const fs::path& path) {
  const Tensor t = expect(path, DType::kF32, 3);
  if (t.shape[2] != 3) throw IoError(IoError::Kind::kShapeMismatch, where(path) + "track must be F x K x 3");
  const auto v = t.values<float>();
  std::vector<std::vector<Keypoint>> out(t.shape[0], std::vector<Keypoint>(t.shape[1]));
  std::size_t i = 0;
  for (auto& frame : out) {
    for (auto& p : frame) {
      p = {v[i], v[i + 1], v[i + 2] > 0.5f};
      i += 3;
    }
  }
  return out;
}

void write_matrix(const fs::path& path, const Matrix& m) {
  write_tensor(path, Tensor::from<double>(m.values, {std::uint32_t(m.rows), std::uint32_t(m.cols)}));
}

Matrix read_matrix(const fs::path& path) {
  const Tensor t = read_tensor(path);
  if (t.shape.size() != 2) {
    throw IoError(IoError::Kind::kShapeMismatch, where(path) + "expected an n x d matrix");
  }
  Matrix m{int(t.shape[0]), int(t.shape[1]), {}};
  if (t.dtype == DType::kF64) {
    m.values = t.values<double>();
  } else if (t.dtype == DType::kF32) {
    const auto f = t.values<float>();
    m.values.assign(f.begin(), f.end());
  } else {
    throw IoError(IoError::Kind::kDtypeMismatch, where(path) + "matrix must be f32 or f64");
  }
  return m;
}

KeyValues parse_key_values(const std::string& text) {
  KeyValues kv;
  std::istringstream in(text);
  std::string line;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    const auto e = s.find_last_not_of(" \t\r");
    return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
  };
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("key=value line " + std::to_string(lineno) + " has no '='");
    }
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return kv;
}

KeyValues read_key_values(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw IoError(IoError::Kind::kOpen, where(path) + "cannot open for reading");
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_key_values(ss.str());
}

void write_key_values(const fs::path& path, const KeyValues& kv) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError(IoError::Kind::kOpen, where(path) + "cannot open for writing");
  for (const auto& [k, v] : kv) f << k << "=" << v << "\n";
  if (!f) throw IoError(IoError::Kind::kOpen, where(path) + "write failed");
}

VideoSample StoredSequence::sample() const {
  VideoSample s;
  for (int i = 0; i < static_cast<int>(frames.size()); ++i) {
    if (i == source_index) {
      s.source = frames[i];
    } else {
      s.driving.push_back(frames[i]);
    }
  }
  return s;
}

std::string frame_stem(int index) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d", index);
  return buf;
}

void write_sequence(const fs::path& dir, const VideoSample& video) {
  std::error_code ec;
  fs::create_directories(dir / "frames", ec);
  if (ec) throw IoError(IoError::Kind::kOpen, where(dir) + "cannot create directory: " + ec.message());
  const auto frames = video.frames();
  for (int i = 0; i < static_cast<int>(frames.size()); ++i) {
    const auto stem = dir / "frames" / frame_stem(i);
    write_feature_map(stem.string() + ".img.dwt", frames[i].image);
    write_iuv(stem.string() + ".iuv.dwt", frames[i].iuv);
    if (!frames[i].keypoints.empty()) write_keypoints(stem.string() + ".kp.dwt", frames[i].keypoints);
  }
  write_key_values(dir / "manifest.txt", {{"source", "0"}, {"frames", std::to_string(frames.size())}});
}

StoredSequence read_sequence(const fs::path& dir) {
  const KeyValues kv = read_key_values(dir / "manifest.txt");
  StoredSequence seq;
  int count = 0;
  try {
    seq.source_index = std::stoi(kv.at("source"));
    count = std::stoi(kv.at("frames"));
  } catch (const std::exception&) {
    throw IoError(IoError::Kind::kFormat, where(dir / "manifest.txt") + "missing or malformed source/frames");
  }
  if (count < 1 || seq.source_index < 0 || seq.source_index >= count) {
    throw IoError(IoError::Kind::kFormat, where(dir / "manifest.txt") + "source index out of range");
  }
  for (int i = 0; i < count; ++i) {
    const std::string stem = (dir / "frames" / frame_stem(i)).string();
    Frame f;
    f.image = read_feature_map(stem + ".img.dwt");
    f.iuv = read_iuv(stem + ".iuv.dwt");
    if (fs::exists(stem + ".kp.dwt")) f.keypoints = read_keypoints(stem + ".kp.dwt");
    if (f.image.height != f.iuv.height || f.image.width != f.iuv.width) {
      throw IoError(IoError::Kind::kShapeMismatch, stem + ": image and IUV sizes differ");
    }
    if (!seq.frames.empty() && !seq.frames.front().image.same_shape(f.image)) {
      throw IoError(IoError::Kind::kShapeMismatch, stem + ": frame size differs from frame 0");
    }
    seq.frames.push_back(std::move(f));
  }
  return seq;
}

}  // namespace dwnet::io
