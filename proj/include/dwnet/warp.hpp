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
#include <vector>

#include "dwnet/nn.hpp"
#include "dwnet/tensor.hpp"

namespace dwnet {

// Per-cell source coordinates. Coordinates are normalized so that -1 is the
// center of the first pixel and +1 the center of the last one along each axis:
// pixel index = (c + 1) / 2 * (size - 1). Channel 0 holds x, channel 1 holds y.
// Values may leave [-1, 1]; the sampler clamps them to the border.
template <typename T>
struct BasicWarpGrid {
  BasicFeatureMap<T> coords;

  BasicWarpGrid() = default;
  BasicWarpGrid(int h, int w) : coords(2, h, w) {}
  explicit BasicWarpGrid(BasicFeatureMap<T> c) : coords(std::move(c)) {
    if (coords.channels != 2) throw ShapeError("WarpGrid: coordinate map must have 2 channels");
  }

  int height() const { return coords.height; }
  int width() const { return coords.width; }
  T& x(int i, int j) { return coords.at(0, i, j); }
  T& y(int i, int j) { return coords.at(1, i, j); }
  const T& x(int i, int j) const { return coords.at(0, i, j); }
  const T& y(int i, int j) const { return coords.at(1, i, j); }

  template <typename U>
  BasicWarpGrid<U> cast() const {
    return BasicWarpGrid<U>(coords.template cast<U>());
  }
};

using WarpGrid = BasicWarpGrid<float>;
using WarpGridD = BasicWarpGrid<double>;

// Pixel index <-> normalized coordinate along an axis of `size` pixels.
inline double to_normalized(double pixel, int size) {
  return size > 1 ? -1.0 + 2.0 * pixel / static_cast<double>(size - 1) : 0.0;
}
inline double to_pixel(double normalized, int size) {
  return size > 1 ? (normalized + 1.0) * 0.5 * static_cast<double>(size - 1) : 0.0;
}

template <typename T>
BasicWarpGrid<T> identity_grid(int height, int width);

// grid - identity and its inverse.
template <typename T>
BasicWarpGrid<T> to_relative(const BasicWarpGrid<T>& grid);
template <typename T>
BasicWarpGrid<T> from_relative(const BasicWarpGrid<T>& rel);

// Bilinear sampling with clamp-to-border. Output has the input's channels and
// the grid's spatial size.
template <typename T>
BasicFeatureMap<T> bilinear_sample(const BasicFeatureMap<T>& input, const BasicWarpGrid<T>& grid);

template <typename T>
struct SampleGradients {
  BasicFeatureMap<T> input;
  BasicWarpGrid<T> grid;
};

// Adjoint of bilinear_sample for the forward call (input, grid). Each output
// cell sends gradient to at most four input pixels. Coordinates clamped to
// the border receive zero gradient along the clamped axis.
template <typename T>
SampleGradients<T> bilinear_sample_backward(const BasicFeatureMap<T>& input, const BasicWarpGrid<T>& grid,
                                            const BasicFeatureMap<T>& upstream);

// Stateful wrapper for use inside composite modules.
template <typename T>
class BilinearSampler {
 public:
  BasicFeatureMap<T> forward(const BasicFeatureMap<T>& input, const BasicWarpGrid<T>& grid);
  SampleGradients<T> backward(const BasicFeatureMap<T>& upstream);
  std::size_t cache_depth() const { return cache_.size(); }
  void clear_cache() { cache_.clear(); }

 private:
  struct State {
    BasicFeatureMap<T> input;
    BasicWarpGrid<T> grid;
  };
  nn::CacheStack<State> cache_;
};

// result(i, j) = inner evaluated (bilinearly) at outer(i, j): sampling with
// the result equals sampling with inner, then with outer.
template <typename T>
BasicWarpGrid<T> compose(const BasicWarpGrid<T>& outer, const BasicWarpGrid<T>& inner);

// Resamples a grid to another resolution by bilinear interpolation of its
// relative shifts, then re-adding the identity of the target size.
template <typename T>
BasicWarpGrid<T> resize_grid(const BasicWarpGrid<T>& grid, int height, int width);

// Mean Euclidean distance between two grids, in pixels of a source image of
// size source_h x source_w, over cells where mask is nonzero (all cells when
// mask is empty). Returns 0 when no cell is selected.
double endpoint_error(const WarpGrid& a, const WarpGrid& b, int source_h, int source_w,
                      const std::vector<std::uint8_t>& mask = {});

extern template struct BasicWarpGrid<float>;
extern template struct BasicWarpGrid<double>;
extern template class BilinearSampler<float>;
extern template class BilinearSampler<double>;

}  // namespace dwnet
