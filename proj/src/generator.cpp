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
#include "dwnet/generator.hpp"

#include <cmath>

#include "dwnet/correspondence.hpp"

namespace dwnet {

GeneratorConfig GeneratorConfig::paper() {
  GeneratorConfig c;
  c.image_size = 256;
  c.grid_size = 64;
  c.pose_features = 64;
  c.appearance_features = 64;
  c.decoder_width = 128;
  c.refiner_width = 64;
  c.normalize = true;
  return c;
}

void GeneratorConfig::validate() const {
  if (image_size < 4 || image_channels < 1 || n_parts < 1) throw ConfigError("generator: invalid image settings");
  if (!warp_only && image_size != 4 * grid_size) {
    throw ConfigError("generator: image size " + std::to_string(image_size) + " must be 4x the grid size " +
                      std::to_string(grid_size));
  }
  if (pose_features < 1 || appearance_features < 1 || decoder_width < 4 || decoder_blocks < 0 ||
      refiner_width < 1 || refiner_blocks < 0) {
    throw ConfigError("generator: channel counts must be positive");
  }
}

namespace {

template <typename T>
void init_layers(nn::Sequential<T>& seq, Rng& rng) {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    auto& layer = seq.layer(i);
    if (auto* conv = dynamic_cast<nn::Conv2d<T>*>(&layer)) {
      conv->init_he(rng);
    } else if (auto* block = dynamic_cast<nn::ResnetBlock<T>*>(&layer)) {
      block->init_he(rng);
      // Without normalization a deep stack of blocks starts as the identity;
      // the second convolution still gets gradients through the skip.
      if (!block->normalized()) {
        for (auto* p : block->second_conv().parameters()) std::fill(p->value.begin(), p->value.end(), T(0));
      }
    } else if (auto* inner = dynamic_cast<nn::Sequential<T>*>(&layer)) {
      init_layers(*inner, rng);
    }
  }
}

// Two stride-2 convolutions, each followed by instance norm (when enabled)
// and ReLU. Convolutions carry a bias only without the norm.
template <typename T>
std::unique_ptr<nn::Sequential<T>> make_encoder(int in, int out, bool normalize) {
  auto s = std::make_unique<nn::Sequential<T>>();
  const int mid = std::max(1, out / 2);
  s->add(nn::make_downsample_conv<T>(in, mid, !normalize));
  if (normalize) s->template emplace<nn::InstanceNorm<T>>(mid);
  s->template emplace<nn::Relu<T>>();
  s->add(nn::make_downsample_conv<T>(mid, out, !normalize));
  if (normalize) s->template emplace<nn::InstanceNorm<T>>(out);
  s->template emplace<nn::Relu<T>>();
  return s;
}

template <typename T>
std::unique_ptr<nn::Sequential<T>> make_decoder(const GeneratorConfig& c) {
  auto s = std::make_unique<nn::Sequential<T>>();
  const int w = c.decoder_width;
  const bool bias = !c.normalize;
  s->template emplace<nn::Conv2d<T>>(nn::ConvSpec{c.decoder_input_channels(), w, 3, 1, 1, bias});
  if (c.normalize) s->template emplace<nn::InstanceNorm<T>>(w);
  s->template emplace<nn::Relu<T>>();
  for (int b = 0; b < c.decoder_blocks; ++b) s->template emplace<nn::ResnetBlock<T>>(w, c.normalize);
  s->add(nn::make_upsample_conv<T>(w, w / 2, bias));
  if (c.normalize) s->template emplace<nn::InstanceNorm<T>>(w / 2);
  s->template emplace<nn::Relu<T>>();
  s->add(nn::make_upsample_conv<T>(w / 2, w / 4, bias));
  if (c.normalize) s->template emplace<nn::InstanceNorm<T>>(w / 4);
  s->template emplace<nn::Relu<T>>();
  s->template emplace<nn::Conv2d<T>>(nn::ConvSpec{w / 4, c.image_channels, 3, 1, 1, true});
  s->template emplace<nn::Tanh<T>>();
  return s;
}

}  // namespace

template <typename T>
GeneratorNet<T>::GeneratorNet(const GeneratorConfig& config) : config_(config) {
  config_.validate();
  RefinerConfig rc;
  rc.image_channels = config.image_channels;
  rc.width = config.refiner_width;
  rc.blocks = config.refiner_blocks;
  rc.n_parts = config.n_parts;
  refiner_ = std::make_unique<RefinerNet<T>>(rc);
  sampler_ = std::make_unique<BilinearSampler<T>>();
  if (!config.warp_only) {
    pose_encoder_ = make_encoder<T>(3, config.pose_features, config.normalize);
    appearance_encoder_ = make_encoder<T>(config.image_channels, config.appearance_features, config.normalize);
    decoder_ = make_decoder<T>(config);
  }
}

template <typename T>
void GeneratorNet<T>::init(std::uint64_t seed) {
  Rng refiner_rng = Rng::stream(seed, 3);
  refiner_->init(refiner_rng);
  if (config_.warp_only) return;
  Rng pose_rng = Rng::stream(seed, 1);
  Rng appearance_rng = Rng::stream(seed, 2);
  Rng decoder_rng = Rng::stream(seed, 4);
  init_layers(*pose_encoder_, pose_rng);
  init_layers(*appearance_encoder_, appearance_rng);
  init_layers(*decoder_, decoder_rng);
}

template <typename T>
typename GeneratorNet<T>::Map GeneratorNet<T>::warp_path(const Conditioning<T>& cond, const IuvMap& driving_pose,
                                                         const Map& pose_planes) {
  Map feats = config_.warp_only ? cond.image : appearance_encoder_->forward(cond.image);
  if (!config_.use_warp) return feats;
  const int g = config_.warp_only ? config_.image_size : config_.grid_size;
  const PartIndexUV index = PartIndexUV::build(cond.iuv, config_.n_parts);
  const BasicWarpGrid<T> coarse = downsample_grid(coarse_warp(index, driving_pose), g, g).grid.template cast<T>();
  if (!config_.use_refiner) return sampler_->forward(feats, coarse);
  const BasicWarpGrid<T> refined = refiner_->refine(cond.image, coarse, pose_planes);
  return sampler_->forward(feats, refined);
}

template <typename T>
typename GeneratorNet<T>::Map GeneratorNet<T>::warp_path_backward(const Map& grad) {
  Map grad_feats = grad;
  Map grad_image;
  if (config_.use_warp) {
    SampleGradients<T> s = sampler_->backward(grad);
    grad_feats = std::move(s.input);
    if (config_.use_refiner) grad_image = refiner_->backward(s.grid).source;
  }
  Map g = appearance_encoder_->backward(grad_feats);
  if (!grad_image.empty()) g += grad_image;
  return g;
}

template <typename T>
typename GeneratorNet<T>::Map GeneratorNet<T>::generate_frame(const Conditioning<T>& source,
                                                              const Conditioning<T>& prev,
                                                              const IuvMap& driving_pose) {
  if (prev.origin == FrameOrigin::kReal) {
    throw ValidationError("generate_frame: a real driving frame entered the previous-frame path");
  }
  const int n = config_.image_size;
  auto check_image = [&](const Map& m, const char* what) {
    if (m.channels != config_.image_channels || m.height != n || m.width != n) {
      throw ShapeError(std::string("generate_frame: ") + what + " image is " + m.shape_string() + ", expected " +
                       std::to_string(config_.image_channels) + "x" + std::to_string(n) + "x" + std::to_string(n));
    }
  };
  auto check_pose = [&](const IuvMap& m, const char* what) {
    if (m.height != n || m.width != n) {
      throw ShapeError(std::string("generate_frame: ") + what + " pose is " + std::to_string(m.height) + "x" +
                       std::to_string(m.width) + ", expected " + std::to_string(n) + "x" + std::to_string(n));
    }
  };
  check_image(source.image, "source");
  check_image(prev.image, "previous");
  check_pose(source.iuv, "source");
  check_pose(prev.iuv, "previous");
  check_pose(driving_pose, "driving");

  if (config_.warp_only) {
    const Map pose = iuv_planes(driving_pose, config_.n_parts).template cast<T>();
    Map out = warp_path(source, driving_pose, pose);
    for (auto& v : out.data) v = std::clamp(v, T(-1), T(1));
    return out;
  }
  const int g = config_.grid_size;
  const Map pose_full = iuv_planes(driving_pose, config_.n_parts).template cast<T>();
  const Map pose_grid = pose_planes_at(driving_pose, g, g, config_.n_parts).template cast<T>();
  const Map pose_feats = pose_encoder_->forward(pose_full);
  const Map src_feats = warp_path(source, driving_pose, pose_grid);
  const Map prev_feats = config_.use_prev_path ? warp_path(prev, driving_pose, pose_grid)
                                               : Map(config_.appearance_features, g, g);
  const Map* parts[] = {&pose_feats, &src_feats, &prev_feats};
  return decoder_->forward(concat_channels<T>(std::span<const Map* const>(parts)));
}

template <typename T>
typename GeneratorNet<T>::FrameGradients GeneratorNet<T>::backward(const Map& grad_out) {
  if (config_.warp_only) throw ConfigError("GeneratorNet: warp-only mode has no backward pass");
  const Map grad_in = decoder_->backward(grad_out);
  const int counts[] = {config_.pose_features, config_.appearance_features, config_.appearance_features};
  auto pieces = split_channels(grad_in, std::span<const int>(counts));
  const int n = config_.image_size;
  FrameGradients out;
  if (config_.use_prev_path) {
    out.prev = warp_path_backward(pieces[2]);
    if (config_.detach_prev) out.prev.fill(T(0));
  } else {
    out.prev = Map(config_.image_channels, n, n);
  }
  out.source = warp_path_backward(pieces[1]);
  pose_encoder_->backward(pieces[0]);
  return out;
}

template <typename T>
std::vector<nn::Param<T>*> GeneratorNet<T>::parameters() {
  std::vector<nn::Param<T>*> out;
  if (!config_.warp_only) {
    pose_encoder_->collect_params(out);
    appearance_encoder_->collect_params(out);
  }
  for (auto* p : refiner_->parameters()) out.push_back(p);
  if (!config_.warp_only) decoder_->collect_params(out);
  return out;
}

template <typename T>
void GeneratorNet<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
std::size_t GeneratorNet<T>::cache_depth() const {
  std::size_t d = refiner_->cache_depth() + sampler_->cache_depth();
  if (!config_.warp_only) d += pose_encoder_->cache_depth() + appearance_encoder_->cache_depth() + decoder_->cache_depth();
  return d;
}

template <typename T>
void GeneratorNet<T>::clear_cache() {
  refiner_->clear_cache();
  sampler_->clear_cache();
  if (config_.warp_only) return;
  pose_encoder_->clear_cache();
  appearance_encoder_->clear_cache();
  decoder_->clear_cache();
}

template class GeneratorNet<float>;
template class GeneratorNet<double>;

void rollout_stream(GeneratorNet<float>& net, const Frame& source, std::span<const IuvMap> driving_poses,
                    const std::function<void(std::size_t, const FeatureMap&)>& sink) {
  nn::NoGradGuard no_grad;
  const Conditioning<float> src{source.image, source.iuv, FrameOrigin::kSource};
  FeatureMap prev_image;
  for (std::size_t k = 0; k < driving_poses.size(); ++k) {
    // The first frame treats the source as its previous frame.
    const Conditioning<float> prev = k == 0 ? src
                                            : Conditioning<float>{prev_image, driving_poses[k - 1],
                                                                  FrameOrigin::kGenerated};
    FeatureMap frame = net.generate_frame(src, prev, driving_poses[k]);
    sink(k, frame);
    prev_image = std::move(frame);
  }
}

std::vector<FeatureMap> rollout(GeneratorNet<float>& net, const Frame& source,
                                std::span<const IuvMap> driving_poses) {
  std::vector<FeatureMap> out;
  out.reserve(driving_poses.size());
  rollout_stream(net, source, driving_poses, [&](std::size_t, const FeatureMap& f) { out.push_back(f); });
  return out;
}

TrainingQuadruple sample_quadruple(int video_length, Rng& rng) {
  if (video_length < 3) {
    throw ValidationError("sample_quadruple: video has " + std::to_string(video_length) +
                          " frames, at least 3 are needed");
  }
  TrainingQuadruple q;
  q.i = static_cast<int>(rng.uniform_int(1, video_length));
  q.j = static_cast<int>(rng.uniform_int(1, video_length - 2));
  return q;
}

// ---- Trainer

namespace {

CriticConfig critic_config_for(const GeneratorNet<float>& g, CriticConfig c) {
  c.image_channels = g.config().image_channels;
  c.pose_channels = 3;
  return c;
}

}  // namespace

Trainer::Trainer(GeneratorNet<float>& generator, const TrainerConfig& config)
    : generator_(generator),
      config_(config),
      critic_(critic_config_for(generator, config.critic)),
      critic_features_(critic_),
      perceptual_(generator.config().image_channels),
      g_opt_(generator.parameters()),
      d_opt_(critic_.parameters()),
      schedule_(config.learning_rate, config.total_steps) {
  if (generator.config().warp_only) throw ConfigError("Trainer: warp-only generators cannot be trained");
  Rng critic_rng = Rng::stream(config.seed, 5);
  critic_.init(critic_rng);
}

StepLosses Trainer::step(std::span<const Frame> video, const TrainingQuadruple& q) {
  const int n = static_cast<int>(video.size());
  if (n < 3 || q.i < 1 || q.i > n || q.j < 1 || q.j + 2 > n) {
    throw ValidationError("Trainer::step: quadruple (" + std::to_string(q.i) + ", " + std::to_string(q.j) +
                          ") out of range for a video of " + std::to_string(n) + " frames");
  }
  const double lr = config_.total_steps > 0 ? schedule_.at(steps_) : config_.learning_rate;
  const Frame& source = video[q.i - 1];
  const Frame* targets[3] = {&video[q.j - 1], &video[q.j], &video[q.j + 1]};

  auto critic_input = [&](const FeatureMap& image, const IuvMap& pose) {
    if (!critic_.config().conditional) return image;
    return concat_channels(image, iuv_planes(pose, generator_.config().n_parts));
  };
  auto fail = [&](const std::string& what) {
    generator_.clear_cache();
    critic_.clear_cache();
    throw NumericError("Trainer::step: non-finite " + what + " at step " + std::to_string(steps_));
  };

  generator_.zero_grad();
  const Conditioning<float> src{source.image, source.iuv, FrameOrigin::kSource};
  std::array<FeatureMap, 3> fake;
  for (int k = 0; k < 3; ++k) {
    const Conditioning<float> prev = k == 0 ? src
                                            : Conditioning<float>{fake[k - 1], targets[k - 1]->iuv,
                                                                  FrameOrigin::kGenerated};
    fake[k] = generator_.generate_frame(src, prev, targets[k]->iuv);
  }

  std::vector<FeatureExtractor<float>*> extractors;
  if (config_.feature_matching) extractors.push_back(&critic_features_);
  if (config_.perceptual) extractors.push_back(&perceptual_);

  StepLosses losses;
  std::array<FeatureMap, 3> grad_fake;
  std::array<double, 3> adv{}, rec{};
  for (int k = 0; k < 3; ++k) {
    const FeatureMap in = critic_input(fake[k], targets[k]->iuv);
    FeatureMap grad_scores;
    adv[k] = lsgan_g_loss(critic_.forward(in), &grad_scores);
    grad_scores *= static_cast<float>(config_.adv_weight);
    FeatureMap g = critic_.backward(grad_scores);
    grad_fake[k] = FeatureMap(fake[k].channels, fake[k].height, fake[k].width);
    std::copy(g.data.begin(), g.data.begin() + grad_fake[k].size(), grad_fake[k].data.begin());
    LossWithGrad<float> r = reconstruction_loss_grad<float>(extractors, targets[k]->image, fake[k]);
    rec[k] = r.value;
    r.grad *= static_cast<float>(config_.lambda);
    grad_fake[k] += r.grad;
    if (!std::isfinite(adv[k]) || !std::isfinite(rec[k])) fail("generator loss");
  }
  FeatureMap carry;
  for (int k = 2; k >= 0; --k) {
    FeatureMap g = grad_fake[k];
    if (!carry.empty()) g += carry;
    auto grads = generator_.backward(g);
    carry = std::move(grads.prev);
  }
  g_opt_.step(lr);

  critic_.zero_grad();
  double d_total = 0.0;
  for (int k = 0; k < 3; ++k) {
    const FeatureMap real_scores = critic_.forward(critic_input(targets[k]->image, targets[k]->iuv));
    const FeatureMap fake_scores = critic_.forward(critic_input(fake[k], targets[k]->iuv));
    FeatureMap gr, gf;
    const double d = lsgan_d_loss(real_scores, fake_scores, &gr, &gf);
    if (!std::isfinite(d)) fail("critic loss");
    critic_.backward(gf);
    critic_.backward(gr);
    d_total += d;
  }
  d_opt_.step(lr);
  ++steps_;

  losses.d_loss = d_total / 3.0;
  for (int k = 0; k < 3; ++k) {
    losses.g_loss += adv[k];
    losses.rec_loss += rec[k];
    losses.frame_rec[k] = rec[k];
  }
  losses.total = config_.adv_weight * losses.g_loss + config_.lambda * losses.rec_loss;
  return losses;
}

}  // namespace dwnet
