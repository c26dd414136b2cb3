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
#include <memory>
#include <span>
#include <vector>

#include "dwnet/nn.hpp"
#include "dwnet/rng.hpp"

namespace dwnet {

struct CriticConfig {
  int image_channels = 3;
  int width = 32;
  // When set, pose planes are stacked onto the image before scoring.
  bool conditional = false;
  int pose_channels = 3;

  int input_channels() const { return image_channels + (conditional ? pose_channels : 0); }
};

// Patch critic: three 4x4 stride-2 convolutions, leaky ReLU between them.
// The activations after each stage are its taps; the last tap is the
// (1-channel) map of per-patch realism scores.
template <typename T>
class PatchCritic {
 public:
  using Map = BasicFeatureMap<T>;
  static constexpr int kStages = 3;

  explicit PatchCritic(const CriticConfig& config = {});

  void init(Rng& rng);

  std::vector<Map> forward_taps(const Map& input);
  Map forward(const Map& input) { return forward_taps(input).back(); }
  // Takes one gradient per tap (empty maps mean zero) and returns the
  // gradient with respect to the input.
  Map backward_taps(const std::vector<Map>& tap_grads);
  Map backward(const Map& score_grad);

  std::vector<nn::Param<T>*> parameters();
  void zero_grad();
  std::size_t cache_depth() const;
  void clear_cache();
  const CriticConfig& config() const { return config_; }

 private:
  CriticConfig config_;
  std::vector<std::unique_ptr<nn::Sequential<T>>> stages_;
  nn::CacheStack<std::vector<std::array<int, 3>>> tap_shapes_;
};

// Ordered feature taps of an image. extract() caches for backward() when
// gradients are enabled; backward consumes the most recent extract().
template <typename T>
class FeatureExtractor {
 public:
  using Map = BasicFeatureMap<T>;
  virtual ~FeatureExtractor() = default;
  virtual std::vector<Map> extract(const Map& image) = 0;
  virtual Map backward(const std::vector<Map>& tap_grads) = 0;
  virtual std::size_t cache_depth() const = 0;
  virtual void clear_cache() = 0;
};

// The raw image as its only tap.
template <typename T>
class IdentityExtractor final : public FeatureExtractor<T> {
 public:
  using Map = BasicFeatureMap<T>;
  std::vector<Map> extract(const Map& image) override;
  Map backward(const std::vector<Map>& tap_grads) override;
  std::size_t cache_depth() const override { return depth_; }
  void clear_cache() override { depth_ = 0; }

 private:
  std::size_t depth_ = 0;
};

// Fixed, seed-initialized convolutional pyramid with three taps standing in
// for a pretrained perceptual network. Its weights are never trained.
template <typename T>
class RandomConvExtractor final : public FeatureExtractor<T> {
 public:
  using Map = BasicFeatureMap<T>;
  static constexpr std::uint64_t kDefaultSeed = 0x5eed;

  explicit RandomConvExtractor(int image_channels = 3, int width = 16, std::uint64_t seed = kDefaultSeed);

  std::vector<Map> extract(const Map& image) override;
  Map backward(const std::vector<Map>& tap_grads) override;
  std::size_t cache_depth() const override;
  void clear_cache() override;

 private:
  std::vector<std::unique_ptr<nn::Sequential<T>>> stages_;
};

// Feature matching on the critic's intermediate layers (score map excluded).
// Backward accumulates into the critic's parameter gradients; trainers reset
// them before the critic's own update.
template <typename T>
class CriticFeatureExtractor final : public FeatureExtractor<T> {
 public:
  using Map = BasicFeatureMap<T>;
  explicit CriticFeatureExtractor(PatchCritic<T>& critic) : critic_(critic) {}
  std::vector<Map> extract(const Map& image) override;
  Map backward(const std::vector<Map>& tap_grads) override;
  std::size_t cache_depth() const override { return critic_.cache_depth(); }
  void clear_cache() override { critic_.clear_cache(); }

 private:
  PatchCritic<T>& critic_;
};

// Least-squares critic objective on score maps: mean (real - 1)^2 + mean fake^2.
template <typename T>
double lsgan_d_loss(const BasicFeatureMap<T>& real_scores, const BasicFeatureMap<T>& fake_scores,
                    BasicFeatureMap<T>* grad_real = nullptr, BasicFeatureMap<T>* grad_fake = nullptr);

// Least-squares generator objective: mean (fake - 1)^2.
template <typename T>
double lsgan_g_loss(const BasicFeatureMap<T>& fake_scores, BasicFeatureMap<T>* grad_fake = nullptr);

template <typename T>
struct LossWithGrad {
  double value = 0.0;
  BasicFeatureMap<T> grad;  // with respect to the generated image
};

// Sum over extractors and their taps of the mean absolute feature difference.
// Target features are computed without caching.
template <typename T>
double reconstruction_loss(std::span<FeatureExtractor<T>* const> extractors, const BasicFeatureMap<T>& target,
                           const BasicFeatureMap<T>& generated);

// As reconstruction_loss, also backpropagating to the generated image.
// The subgradient of |x| at 0 is taken as 0.
template <typename T>
LossWithGrad<T> reconstruction_loss_grad(std::span<FeatureExtractor<T>* const> extractors,
                                         const BasicFeatureMap<T>& target, const BasicFeatureMap<T>& generated);

// Sum over generated frames of g_loss + lambda * rec_loss.
double total_loss(std::span<const double> g_losses, std::span<const double> rec_losses, double lambda);

inline constexpr double kDefaultLambda = 10.0;

extern template class PatchCritic<float>;
extern template class PatchCritic<double>;
extern template class IdentityExtractor<float>;
extern template class IdentityExtractor<double>;
extern template class RandomConvExtractor<float>;
extern template class RandomConvExtractor<double>;
extern template class CriticFeatureExtractor<float>;
extern template class CriticFeatureExtractor<double>;

}  // namespace dwnet
