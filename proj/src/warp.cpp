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
#include "dwnet/warp.hpp"

#include <cmath>
#include <limits>
#include <string>

namespace dwnet {
namespace {

// Location of one sample along one axis.
struct AxisSample {
  int i0 = 0;
  int i1 = 0;
  double frac = 0.0;
  double dpix = 0.0;  // d(pixel position) / d(normalized coordinate); 0 when clamped
};

template <typename T>
AxisSample locate(T coord, int size) {
  AxisSample s;
  if (!std::isfinite(static_cast<double>(coord))) throw NumericError("bilinear_sample: non-finite grid coordinate");
  if (size <= 1) return s;
  const double scale = 0.5 * static_cast<double>(size - 1);
  double p = (static_cast<double>(coord) + 1.0) * scale;
  // Absorb the rounding of normalized coordinates that name a pixel center,
  // which makes identity sampling exact.
  const double snap_tol = 8.0 * std::numeric_limits<T>::epsilon() * static_cast<double>(size - 1);
  const double r = std::round(p);
  if (std::abs(p - r) <= snap_tol) p = r;
  s.dpix = scale;
  if (p <= 0.0) {
    if (p < 0.0) s.dpix = 0.0;
    p = 0.0;
  } else if (p >= size - 1) {
    if (p > size - 1) s.dpix = 0.0;
    p = size - 1;
  }
  int i0 = static_cast<int>(std::floor(p));
  if (i0 > size - 2) i0 = size - 2;
  s.i0 = i0;
  s.i1 = i0 + 1;
  s.frac = p - i0;
  return s;
}

template <typename T>
void require_grid(const BasicWarpGrid<T>& g, const char* who) {
  if (g.coords.channels != 2) throw ShapeError(std::string(who) + ": grid must have 2 channels");
}

}  // namespace

template <typename T>
BasicWarpGrid<T> identity_grid(int height, int width) {
  if (height < 1 || width < 1) throw ShapeError("identity_grid: dimensions must be >= 1");
  BasicWarpGrid<T> g(height, width);
  for (int i = 0; i < height; ++i) {
    const T yn = static_cast<T>(to_normalized(i, height));
    for (int j = 0; j < width; ++j) {
      g.x(i, j) = static_cast<T>(to_normalized(j, width));
      g.y(i, j) = yn;
    }
  }
  return g;
}

template <typename T>
BasicWarpGrid<T> to_relative(const BasicWarpGrid<T>& grid) {
  require_grid(grid, "to_relative");
  BasicWarpGrid<T> r = grid;
  r.coords -= identity_grid<T>(grid.height(), grid.width()).coords;
  return r;
}

template <typename T>
BasicWarpGrid<T> from_relative(const BasicWarpGrid<T>& rel) {
  require_grid(rel, "from_relative");
  BasicWarpGrid<T> g = rel;
  g.coords += identity_grid<T>(rel.height(), rel.width()).coords;
  return g;
}

template <typename T>
BasicFeatureMap<T> bilinear_sample(const BasicFeatureMap<T>& input, const BasicWarpGrid<T>& grid) {
  require_grid(grid, "bilinear_sample");
  if (input.height < 1 || input.width < 1) throw ShapeError("bilinear_sample: empty input");
  const int oh = grid.height();
  const int ow = grid.width();
  BasicFeatureMap<T> out(input.channels, oh, ow);
  for (int i = 0; i < oh; ++i) {
    for (int j = 0; j < ow; ++j) {
      const AxisSample ax = locate(grid.x(i, j), input.width);
      const AxisSample ay = locate(grid.y(i, j), input.height);
      const T fx = static_cast<T>(ax.frac);
      const T fy = static_cast<T>(ay.frac);
      const int x1 = input.width > 1 ? ax.i1 : 0;
      const int y1 = input.height > 1 ? ay.i1 : 0;
      for (int c = 0; c < input.channels; ++c) {
        const T top = (T(1) - fx) * input.at(c, ay.i0, ax.i0) + fx * input.at(c, ay.i0, x1);
        const T bot = (T(1) - fx) * input.at(c, y1, ax.i0) + fx * input.at(c, y1, x1);
        out.at(c, i, j) = (T(1) - fy) * top + fy * bot;
      }
    }
  }
  return out;
}

template <typename T>
SampleGradients<T> bilinear_sample_backward(const BasicFeatureMap<T>& input, const BasicWarpGrid<T>& grid,
                                            const BasicFeatureMap<T>& upstream) {
  require_grid(grid, "bilinear_sample_backward");
  if (upstream.channels != input.channels || upstream.height != grid.height() ||
      upstream.width != grid.width()) {
    throw ShapeError("bilinear_sample_backward: upstream shape " + upstream.shape_string() +
                     " inconsistent with forward");
  }
  SampleGradients<T> g{BasicFeatureMap<T>(input.channels, input.height, input.width),
                       BasicWarpGrid<T>(grid.height(), grid.width())};
  for (int i = 0; i < grid.height(); ++i) {
    for (int j = 0; j < grid.width(); ++j) {
      const AxisSample ax = locate(grid.x(i, j), input.width);
      const AxisSample ay = locate(grid.y(i, j), input.height);
      const T fx = static_cast<T>(ax.frac);
      const T fy = static_cast<T>(ay.frac);
      const int x1 = input.width > 1 ? ax.i1 : 0;
      const int y1 = input.height > 1 ? ay.i1 : 0;
      T gx = 0, gy = 0;
      for (int c = 0; c < input.channels; ++c) {
        const T up = upstream.at(c, i, j);
        if (up == T(0)) continue;
        const T v00 = input.at(c, ay.i0, ax.i0);
        const T v01 = input.at(c, ay.i0, x1);
        const T v10 = input.at(c, y1, ax.i0);
        const T v11 = input.at(c, y1, x1);
        g.input.at(c, ay.i0, ax.i0) += up * (T(1) - fx) * (T(1) - fy);
        g.input.at(c, ay.i0, x1) += up * fx * (T(1) - fy);
        g.input.at(c, y1, ax.i0) += up * (T(1) - fx) * fy;
        g.input.at(c, y1, x1) += up * fx * fy;
        gx += up * ((T(1) - fy) * (v01 - v00) + fy * (v11 - v10));
        gy += up * ((T(1) - fx) * (v10 - v00) + fx * (v11 - v01));
      }
      g.grid.x(i, j) = gx * static_cast<T>(ax.dpix);
      g.grid.y(i, j) = gy * static_cast<T>(ay.dpix);
    }
  }
  return g;
}

template <typename T>
BasicFeatureMap<T> BilinearSampler<T>::forward(const BasicFeatureMap<T>& input, const BasicWarpGrid<T>& grid) {
  BasicFeatureMap<T> out = bilinear_sample(input, grid);
  cache_.push(State{input, grid});
  return out;
}

template <typename T>
SampleGradients<T> BilinearSampler<T>::backward(const BasicFeatureMap<T>& upstream) {
  State s = cache_.pop("BilinearSampler");
  return bilinear_sample_backward(s.input, s.grid, upstream);
}

template <typename T>
BasicWarpGrid<T> compose(const BasicWarpGrid<T>& outer, const BasicWarpGrid<T>& inner) {
  require_grid(outer, "compose");
  require_grid(inner, "compose");
  return BasicWarpGrid<T>(bilinear_sample(inner.coords, outer));
}

template <typename T>
BasicWarpGrid<T> resize_grid(const BasicWarpGrid<T>& grid, int height, int width) {
  const BasicWarpGrid<T> rel = to_relative(grid);
  const BasicWarpGrid<T> id = identity_grid<T>(height, width);
  BasicWarpGrid<T> out(bilinear_sample(rel.coords, id));
  out.coords += id.coords;
  return out;
}

double endpoint_error(const WarpGrid& a, const WarpGrid& b, int source_h, int source_w,
                      const std::vector<std::uint8_t>& mask) {
  BasicFeatureMap<float>::require_same_shape(a.coords, b.coords, "endpoint_error");
  const std::size_t n = a.coords.plane();
  if (!mask.empty() && mask.size() != n) throw ShapeError("endpoint_error: mask size mismatch");
  const double sx = source_w > 1 ? 0.5 * (source_w - 1) : 0.0;
  const double sy = source_h > 1 ? 0.5 * (source_h - 1) : 0.0;
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < n; ++k) {
    if (!mask.empty() && !mask[k]) continue;
    const double dx = (double(a.coords.data[k]) - double(b.coords.data[k])) * sx;
    const double dy = (double(a.coords.data[n + k]) - double(b.coords.data[n + k])) * sy;
    total += std::sqrt(dx * dx + dy * dy);
    ++count;
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

#define DWNET_INSTANTIATE_WARP(T)                                                                     \
  template BasicWarpGrid<T> identity_grid<T>(int, int);                                               \
  template BasicWarpGrid<T> to_relative<T>(const BasicWarpGrid<T>&);                                  \
  template BasicWarpGrid<T> from_relative<T>(const BasicWarpGrid<T>&);                                \
  template BasicFeatureMap<T> bilinear_sample<T>(const BasicFeatureMap<T>&, const BasicWarpGrid<T>&); \
  template SampleGradients<T> bilinear_sample_backward<T>(const BasicFeatureMap<T>&,                  \
                                                          const BasicWarpGrid<T>&,                    \
                                                          const BasicFeatureMap<T>&);                 \
  template BasicWarpGrid<T> compose<T>(const BasicWarpGrid<T>&, const BasicWarpGrid<T>&);             \
  template BasicWarpGrid<T> resize_grid<T>(const BasicWarpGrid<T>&, int, int);                        \
  template struct BasicWarpGrid<T>;                                                                   \
  template class BilinearSampler<T>;

DWNET_INSTANTIATE_WARP(float)
DWNET_INSTANTIATE_WARP(double)

#undef DWNET_INSTANTIATE_WARP

}  // namespace dwnet
