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
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "dwnet/iuv.hpp"
#include "dwnet/losses.hpp"
#include "dwnet/nn.hpp"
#include "dwnet/optim.hpp"
#include "dwnet/refiner.hpp"
#include "dwnet/rng.hpp"
#include "dwnet/video.hpp"
#include "dwnet/warp.hpp"

namespace dwnet {

struct GeneratorConfig {
  int image_size = 64;
  int grid_size = 16;  // feature/warp resolution: image_size / 4
  int image_channels = 3;
  int n_parts = kDefaultPartCount;
  int pose_features = 32;
  int appearance_features = 32;
  int decoder_width = 64;
  int decoder_blocks = 9;
  int refiner_width = 32;
  int refiner_blocks = 2;

  bool use_warp = true;       // off: appearance features enter the decoder unaligned
  bool use_refiner = true;    // off: the coarse grid is used as is
  bool use_prev_path = true;  // off: the previous-frame path is fed zeros
  bool detach_prev = false;   // stop gradients into the previous frame
  // Instance norm in the encoders and decoder. Off at desk scale, where it
  // slowed learning several-fold on small synthetic sets.
  bool normalize = false;
  // Debug mode: identity appearance encoder, warp at image resolution and a
  // decoder that returns the warped source. Not trainable.
  bool warp_only = false;

  static GeneratorConfig desk() { return {}; }
  static GeneratorConfig paper();

  // Throws ConfigError on inconsistent sizes.
  void validate() const;
  int decoder_input_channels() const { return pose_features + 2 * appearance_features; }
};

// Where a conditioning image came from. Real driving frames must never feed
// the previous-frame path.
enum class FrameOrigin { kSource, kGenerated, kReal };

template <typename T>
struct Conditioning {
  const BasicFeatureMap<T>& image;
  const IuvMap& iuv;
  FrameOrigin origin;
};

// Pose encoder, shared appearance encoder, refined warp paths for the source
// and the previous frame, and the decoder:
//   out = decoder(concat(pose_enc(P(d)), warp(source -> d), warp(prev -> d)))
template <typename T>
class GeneratorNet {
 public:
  using Map = BasicFeatureMap<T>;

  explicit GeneratorNet(const GeneratorConfig& config);
  GeneratorNet(const GeneratorNet&) = delete;
  GeneratorNet& operator=(const GeneratorNet&) = delete;

  // Each sub-network draws from its own stream of `seed`.
  void init(std::uint64_t seed);

  // Throws ValidationError if prev.origin is kReal and ShapeError on
  // mismatched sizes.
  Map generate_frame(const Conditioning<T>& source, const Conditioning<T>& prev, const IuvMap& driving_pose);

  struct FrameGradients {
    Map source;
    Map prev;  // zero when detach_prev is set or the path is disabled
  };
  // Reverses the most recent cached generate_frame().
  FrameGradients backward(const Map& grad_out);

  std::vector<nn::Param<T>*> parameters();
  void zero_grad();
  std::size_t cache_depth() const;
  void clear_cache();

  const GeneratorConfig& config() const { return config_; }
  RefinerNet<T>& refiner() { return *refiner_; }
  nn::Sequential<T>& pose_encoder() { return *pose_encoder_; }
  nn::Sequential<T>& appearance_encoder() { return *appearance_encoder_; }
  nn::Sequential<T>& decoder() { return *decoder_; }

 private:
  Map warp_path(const Conditioning<T>& cond, const IuvMap& driving_pose, const Map& pose_planes);
  Map warp_path_backward(const Map& grad);

  GeneratorConfig config_;
  std::unique_ptr<nn::Sequential<T>> pose_encoder_;
  std::unique_ptr<nn::Sequential<T>> appearance_encoder_;
  std::unique_ptr<RefinerNet<T>> refiner_;
  std::unique_ptr<BilinearSampler<T>> sampler_;
  std::unique_ptr<nn::Sequential<T>> decoder_;
};

// Markovian rollout: frame 1 is conditioned on (source, source), frame k > 1
// on (source, generated frame k - 1 with pose k - 1). Runs without gradient
// caching and keeps only the previous frame; `sink` receives each frame.
void rollout_stream(GeneratorNet<float>& net, const Frame& source, std::span<const IuvMap> driving_poses,
                    const std::function<void(std::size_t, const FeatureMap&)>& sink);
std::vector<FeatureMap> rollout(GeneratorNet<float>& net, const Frame& source,
                                std::span<const IuvMap> driving_poses);

// Frame indices into a video, 1-based: source i and targets j, j+1, j+2.
struct TrainingQuadruple {
  int i = 1;
  int j = 1;
};

// i uniform in [1, n], j uniform in [1, n - 2]. Throws ValidationError for
// videos shorter than 3 frames.
TrainingQuadruple sample_quadruple(int video_length, Rng& rng);

struct TrainerConfig {
  double lambda = kDefaultLambda;
  double adv_weight = 1.0;
  double learning_rate = 2e-4;
  std::int64_t total_steps = 0;  // linear decay horizon; 0 keeps the rate constant
  std::uint64_t seed = 0;
  CriticConfig critic;
  bool feature_matching = true;  // critic taps as a reconstruction extractor
  bool perceptual = true;        // fixed random pyramid as a reconstruction extractor
};

struct StepLosses {
  double d_loss = 0.0;    // critic objective, averaged over the three frames
  double g_loss = 0.0;    // sum of generator adversarial terms
  double rec_loss = 0.0;  // sum of reconstruction terms
  double total = 0.0;     // adv_weight * g_loss + lambda * rec_loss
  std::array<double, 3> frame_rec{};
};

// One generator and one critic update on a quadruple. The three generated
// frames are chained through the previous-frame path and gradients flow
// through the chain unless detach_prev is set.
class Trainer {
 public:
  Trainer(GeneratorNet<float>& generator, const TrainerConfig& config);

  StepLosses step(std::span<const Frame> video, const TrainingQuadruple& q);
  StepLosses step(std::span<const Frame> video, Rng& rng) { return step(video, sample_quadruple(int(video.size()), rng)); }

  PatchCritic<float>& critic() { return critic_; }
  std::int64_t steps_taken() const { return steps_; }

 private:
  GeneratorNet<float>& generator_;
  TrainerConfig config_;
  PatchCritic<float> critic_;
  CriticFeatureExtractor<float> critic_features_;
  RandomConvExtractor<float> perceptual_;
  nn::Optimizer<float> g_opt_;
  nn::Optimizer<float> d_opt_;
  nn::LinearDecay schedule_;
  std::int64_t steps_ = 0;
};

extern template class GeneratorNet<float>;
extern template class GeneratorNet<double>;

}  // namespace dwnet
