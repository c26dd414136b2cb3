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

#include <array>
#include <cstdint>
#include <vector>

#include "dwnet/iuv.hpp"
#include "dwnet/nn.hpp"
#include "dwnet/rng.hpp"
#include "dwnet/synth.hpp"
#include "dwnet/warp.hpp"

namespace dwnet {

struct RefinerConfig {
  int image_channels = 3;
  int pose_channels = 3;
  int width = 32;
  int blocks = 2;
  bool normalize = false;  // instance norm inside the residual blocks
  // The relative coordinates are fed to the network in source pixels and the
  // predicted residual is converted back, so that a pixel-sized shift has
  // unit scale inside the network.
  bool pixel_units = true;
  int n_parts = kDefaultPartCount;

  int input_channels() const { return image_channels + pose_channels + 2; }
};

// Predicts a residual correction to a coarse warp grid:
//   refined = coarse + net(deformed image, driving pose, coarse - identity)
// where the deformed image is the source sampled along the coarse grid at
// grid resolution. Coordinates at the interface are normalized. The last
// convolution starts at zero, so an untrained refiner returns the coarse grid
// unchanged.
template <typename T>
class RefinerNet {
 public:
  using Map = BasicFeatureMap<T>;
  using Grid = BasicWarpGrid<T>;

  explicit RefinerNet(const RefinerConfig& config = {});
  RefinerNet(const RefinerNet&) = delete;
  RefinerNet& operator=(const RefinerNet&) = delete;
  RefinerNet(RefinerNet&&) = default;
  RefinerNet& operator=(RefinerNet&&) = default;

  // He initialization of the hidden layers, zero output layer.
  void init(Rng& rng);

  // pose: pose_channels x h x w, at the resolution of `coarse`.
  Grid refine(const Map& source, const Grid& coarse, const Map& pose);
  Grid refine(const Map& source, const Grid& coarse, const IuvMap& driving_pose);

  struct Gradients {
    Map source;
    Grid coarse;
    Map pose;
  };
  // Reverses the most recent cached refine().
  Gradients backward(const Grid& grad_refined);

  // The bare network on a stacked input, for tests.
  Map residual(const Map& input) { return net_->forward(input); }
  Map residual_backward(const Map& grad) { return net_->backward(grad); }

  std::vector<nn::Param<T>*> parameters() { return net_->parameters(); }
  void zero_grad() { net_->zero_grad(); }
  std::size_t cache_depth() const { return net_->cache_depth() + sampler_->cache_depth() + scales_.size(); }
  void clear_cache() {
    net_->clear_cache();
    sampler_->clear_cache();
    scales_.clear();
  }

  const RefinerConfig& config() const { return config_; }
  nn::Conv2d<T>& output_conv() { return *last_; }

 private:
  RefinerConfig config_;
  std::unique_ptr<nn::Sequential<T>> net_;
  nn::Conv2d<T>* last_ = nullptr;
  std::unique_ptr<BilinearSampler<T>> sampler_;
  nn::CacheStack<std::array<T, 2>> scales_;

  std::array<T, 2> pixel_scale(const Map& source) const;
};

// Driving pose at grid resolution, as refiner input planes.
FeatureMap pose_planes_at(const IuvMap& driving_pose, int height, int width, int n_parts = kDefaultPartCount);

// One supervised example: a corrupted coarse grid and the true grid, both at
// grid resolution, normalized to the source image.
struct RefinerExample {
  FeatureMap source;
  WarpGrid clean_coarse;  // before corruption
  double noise_px = 0.0;
  WarpGrid coarse;
  FeatureMap pose;
  WarpGrid target;
  std::vector<std::uint8_t> mask;  // cells scored and supervised
};

// Smooth random displacement field with per-axis RMS of `sigma_px` source
// pixels, as a relative grid. `correlation_cells` is the Gaussian smoothing
// width in cells.
WarpGrid smooth_noise_field(int height, int width, double sigma_px, int source_h, int source_w,
                            double correlation_cells, Rng& rng);

// Builds one example per driving frame: nearest-neighbor coarse grid,
// downsampled to grid_size, plus smooth noise; target is the downsampled
// ground truth.
std::vector<RefinerExample> make_refiner_examples(const synth::SyntheticSequence& sequence, int grid_size,
                                                  double noise_px, std::uint64_t seed,
                                                  int n_parts = kDefaultPartCount);

struct RefinerTrainingConfig {
  int epochs = 8;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  // Redraw the corruption of every training example each epoch.
  bool resample_noise = true;
  // The returned and evaluated network holds an exponential moving average
  // of the trained parameters with this decay per step; 0 disables it.
  double ema_decay = 0.998;
  RefinerConfig net;
};

struct RefinerTrainingResult {
  RefinerNet<float> net;
  double baseline = 0.0;            // held-out endpoint error of the coarse grids
  std::vector<double> curve;        // held-out endpoint error after each epoch
  std::vector<double> train_loss;   // mean training loss per epoch
};

// Mean endpoint error (source pixels) of refine() over examples.
double refiner_endpoint_error(RefinerNet<float>& net, const std::vector<RefinerExample>& examples);

// Supervised training on ground-truth grids with a squared endpoint loss over
// masked cells. Deterministic given the seed. Throws NumericError on a
// non-finite loss.
RefinerTrainingResult train_refiner_standalone(const std::vector<RefinerExample>& train,
                                               const std::vector<RefinerExample>& held_out,
                                               const RefinerTrainingConfig& config);

extern template class RefinerNet<float>;
extern template class RefinerNet<double>;

}  // namespace dwnet
