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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "dwnet/error.hpp"

namespace dwnet {

// Channels x height x width array, row-major. Images, encoder activations and
// their gradients all use this type.
template <typename T>
struct BasicFeatureMap {
  using value_type = T;

  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<T> data;

  BasicFeatureMap() = default;
  BasicFeatureMap(int c, int h, int w, T fill = T(0))
      : channels(c), height(h), width(w), data(checked_size(c, h, w), fill) {}

  static std::size_t checked_size(int c, int h, int w) {
    if (c < 0 || h < 0 || w < 0) {
      throw ShapeError("negative feature map dimension");
    }
    return static_cast<std::size_t>(c) * h * w;
  }

  std::size_t size() const { return data.size(); }
  std::size_t plane() const { return static_cast<std::size_t>(height) * width; }
  bool empty() const { return data.empty(); }

  T& at(int c, int y, int x) { return data[(static_cast<std::size_t>(c) * height + y) * width + x]; }
  const T& at(int c, int y, int x) const {
    return data[(static_cast<std::size_t>(c) * height + y) * width + x];
  }

  std::span<T> channel(int c) { return {data.data() + c * plane(), plane()}; }
  std::span<const T> channel(int c) const { return {data.data() + c * plane(), plane()}; }

  bool same_shape(const BasicFeatureMap& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }

  std::string shape_string() const {
    std::ostringstream os;
    os << channels << "x" << height << "x" << width;
    return os.str();
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <typename U>
  BasicFeatureMap<U> cast() const {
    BasicFeatureMap<U> out(channels, height, width);
    std::transform(data.begin(), data.end(), out.data.begin(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  BasicFeatureMap& operator+=(const BasicFeatureMap& o) {
    require_same_shape(*this, o, "operator+=");
    for (std::size_t i = 0; i < data.size(); ++i) data[i] += o.data[i];
    return *this;
  }

  BasicFeatureMap& operator-=(const BasicFeatureMap& o) {
    require_same_shape(*this, o, "operator-=");
    for (std::size_t i = 0; i < data.size(); ++i) data[i] -= o.data[i];
    return *this;
  }

  BasicFeatureMap& operator*=(T s) {
    for (auto& v : data) v *= s;
    return *this;
  }

  static void require_same_shape(const BasicFeatureMap& a, const BasicFeatureMap& b, const char* where) {
    if (!a.same_shape(b)) {
      throw ShapeError(std::string(where) + ": shape mismatch " + a.shape_string() + " vs " +
                       b.shape_string());
    }
  }
};

template <typename T>
BasicFeatureMap<T> operator+(BasicFeatureMap<T> a, const BasicFeatureMap<T>& b) {
  a += b;
  return a;
}

template <typename T>
BasicFeatureMap<T> operator-(BasicFeatureMap<T> a, const BasicFeatureMap<T>& b) {
  a -= b;
  return a;
}

using FeatureMap = BasicFeatureMap<float>;
using FeatureMapD = BasicFeatureMap<double>;

template <typename T>
bool all_finite(const BasicFeatureMap<T>& m) {
  return std::all_of(m.data.begin(), m.data.end(), [](T v) { return std::isfinite(v); });
}

// Stacks maps along the channel axis; all inputs must share height/width.
template <typename T>
BasicFeatureMap<T> concat_channels(std::span<const BasicFeatureMap<T>* const> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: no inputs");
  const int h = parts.front()->height;
  const int w = parts.front()->width;
  int c = 0;
  for (const auto* p : parts) {
    if (p->height != h || p->width != w) {
      throw ShapeError("concat_channels: spatial mismatch " + p->shape_string());
    }
    c += p->channels;
  }
  BasicFeatureMap<T> out(c, h, w);
  auto it = out.data.begin();
  for (const auto* p : parts) it = std::copy(p->data.begin(), p->data.end(), it);
  return out;
}

template <typename T>
BasicFeatureMap<T> concat_channels(const BasicFeatureMap<T>& a, const BasicFeatureMap<T>& b) {
  const BasicFeatureMap<T>* parts[] = {&a, &b};
  return concat_channels<T>(std::span<const BasicFeatureMap<T>* const>(parts));
}

// Inverse of concat_channels: splits into consecutive channel groups.
template <typename T>
std::vector<BasicFeatureMap<T>> split_channels(const BasicFeatureMap<T>& m, std::span<const int> counts) {
  int total = 0;
  for (int c : counts) total += c;
  if (total != m.channels) {
    throw ShapeError("split_channels: counts do not sum to " + std::to_string(m.channels));
  }
  std::vector<BasicFeatureMap<T>> out;
  auto it = m.data.begin();
  for (int c : counts) {
    BasicFeatureMap<T> part(c, m.height, m.width);
    std::copy(it, it + part.size(), part.data.begin());
    it += part.size();
    out.push_back(std::move(part));
  }
  return out;
}

template <typename T>
double mean_abs_diff(const BasicFeatureMap<T>& a, const BasicFeatureMap<T>& b) {
  BasicFeatureMap<T>::require_same_shape(a, b, "mean_abs_diff");
  if (a.data.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(double(a.data[i]) - double(b.data[i]));
  return s / static_cast<double>(a.data.size());
}

}  // namespace dwnet
