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
#include "dwnet/losses.hpp"

#include <array>
#include <cmath>

namespace dwnet {
namespace {

template <typename T>
BasicFeatureMap<T> zeros_like(const BasicFeatureMap<T>& m) {
  return BasicFeatureMap<T>(m.channels, m.height, m.width);
}

// Shared backward for tapped stage chains: gradient entering stage k is the
// gradient from stage k + 1 plus the gradient on tap k.
template <typename T, typename Stage>
BasicFeatureMap<T> backward_through_taps(std::vector<std::unique_ptr<Stage>>& stages,
                                         const std::vector<BasicFeatureMap<T>>& tap_grads,
                                         const std::vector<std::array<int, 3>>& shapes, const char* who) {
  if (tap_grads.size() != stages.size()) {
    throw ShapeError(std::string(who) + ": expected " + std::to_string(stages.size()) + " tap gradients");
  }
  BasicFeatureMap<T> g;
  for (std::size_t k = stages.size(); k-- > 0;) {
    const auto& s = shapes[k];
    BasicFeatureMap<T> total(s[0], s[1], s[2]);
    if (!g.empty()) total += g;
    if (!tap_grads[k].empty()) total += tap_grads[k];
    g = stages[k]->backward(total);
  }
  return g;
}

}  // namespace

// ---- PatchCritic

template <typename T>
PatchCritic<T>::PatchCritic(const CriticConfig& config) : config_(config) {
  if (config.image_channels < 1 || config.width < 1) throw ConfigError("PatchCritic: invalid configuration");
  const int in[] = {config.input_channels(), config.width, 2 * config.width};
  const int out[] = {config.width, 2 * config.width, 1};
  for (int k = 0; k < kStages; ++k) {
    auto stage = std::make_unique<nn::Sequential<T>>();
    stage->template emplace<nn::Conv2d<T>>(nn::ConvSpec{in[k], out[k], 4, 2, 1, true});
    if (k + 1 < kStages) stage->template emplace<nn::LeakyRelu<T>>(T(0.2));
    stages_.push_back(std::move(stage));
  }
}

template <typename T>
void PatchCritic<T>::init(Rng& rng) {
  for (auto& s : stages_) static_cast<nn::Conv2d<T>&>(s->layer(0)).init_he(rng);
}

template <typename T>
std::vector<typename PatchCritic<T>::Map> PatchCritic<T>::forward_taps(const Map& input) {
  if (input.channels != config_.input_channels()) {
    throw ShapeError("PatchCritic: expected " + std::to_string(config_.input_channels()) + " channels, got " +
                     std::to_string(input.channels));
  }
  std::vector<Map> taps;
  std::vector<std::array<int, 3>> shapes;
  for (auto& s : stages_) {
    taps.push_back(s->forward(taps.empty() ? input : taps.back()));
    shapes.push_back({taps.back().channels, taps.back().height, taps.back().width});
  }
  tap_shapes_.push(std::move(shapes));
  return taps;
}

template <typename T>
typename PatchCritic<T>::Map PatchCritic<T>::backward_taps(const std::vector<Map>& tap_grads) {
  const auto shapes = tap_shapes_.pop("PatchCritic");
  return backward_through_taps<T>(stages_, tap_grads, shapes, "PatchCritic::backward_taps");
}

template <typename T>
typename PatchCritic<T>::Map PatchCritic<T>::backward(const Map& score_grad) {
  std::vector<Map> grads(stages_.size());
  grads.back() = score_grad;
  return backward_taps(grads);
}

template <typename T>
std::vector<nn::Param<T>*> PatchCritic<T>::parameters() {
  std::vector<nn::Param<T>*> out;
  for (auto& s : stages_) s->collect_params(out);
  return out;
}

template <typename T>
void PatchCritic<T>::zero_grad() {
  for (auto* p : parameters()) p->zero_grad();
}

template <typename T>
std::size_t PatchCritic<T>::cache_depth() const {
  std::size_t d = 0;
  for (const auto& s : stages_) d += s->cache_depth();
  return d;
}

template <typename T>
void PatchCritic<T>::clear_cache() {
  for (auto& s : stages_) s->clear_cache();
  tap_shapes_.clear();
}

// ---- extractors

template <typename T>
std::vector<typename IdentityExtractor<T>::Map> IdentityExtractor<T>::extract(const Map& image) {
  if (nn::grad_enabled()) ++depth_;
  return {image};
}

template <typename T>
typename IdentityExtractor<T>::Map IdentityExtractor<T>::backward(const std::vector<Map>& tap_grads) {
  if (depth_ == 0) throw Error("IdentityExtractor: backward called without cached forward state");
  if (tap_grads.size() != 1) throw ShapeError("IdentityExtractor: expected 1 tap gradient");
  --depth_;
  return tap_grads[0];
}

template <typename T>
RandomConvExtractor<T>::RandomConvExtractor(int image_channels, int width, std::uint64_t seed) {
  Rng rng(seed);
  const int in[] = {image_channels, width, 2 * width};
  const int out[] = {width, 2 * width, 2 * width};
  const int stride[] = {1, 2, 2};
  for (int k = 0; k < 3; ++k) {
    auto stage = std::make_unique<nn::Sequential<T>>();
    auto& conv = stage->template emplace<nn::Conv2d<T>>(nn::ConvSpec{in[k], out[k], 3, stride[k], 1, true});
    conv.init_he(rng);
    stage->template emplace<nn::LeakyRelu<T>>(T(0.2));
    stages_.push_back(std::move(stage));
  }
}

template <typename T>
std::vector<typename RandomConvExtractor<T>::Map> RandomConvExtractor<T>::extract(const Map& image) {
  std::vector<Map> taps;
  for (auto& s : stages_) taps.push_back(s->forward(taps.empty() ? image : taps.back()));
  return taps;
}

template <typename T>
typename RandomConvExtractor<T>::Map RandomConvExtractor<T>::backward(const std::vector<Map>& tap_grads) {
  if (tap_grads.size() != stages_.size()) throw ShapeError("RandomConvExtractor: expected 3 tap gradients");
  std::vector<std::array<int, 3>> shapes;
  for (const auto& g : tap_grads) {
    if (g.empty()) throw ShapeError("RandomConvExtractor: empty tap gradient");
    shapes.push_back({g.channels, g.height, g.width});
  }
  Map grad = backward_through_taps<T>(stages_, tap_grads, shapes, "RandomConvExtractor::backward");
  // The extractor is frozen.
  for (auto& s : stages_) s->zero_grad();
  return grad;
}

template <typename T>
std::size_t RandomConvExtractor<T>::cache_depth() const {
  std::size_t d = 0;
  for (const auto& s : stages_) d += s->cache_depth();
  return d;
}

template <typename T>
void RandomConvExtractor<T>::clear_cache() {
  for (auto& s : stages_) s->clear_cache();
}

template <typename T>
std::vector<typename CriticFeatureExtractor<T>::Map> CriticFeatureExtractor<T>::extract(const Map& image) {
  std::vector<Map> taps = critic_.forward_taps(image);
  taps.pop_back();
  return taps;
}

template <typename T>
typename CriticFeatureExtractor<T>::Map CriticFeatureExtractor<T>::backward(const std::vector<Map>& tap_grads) {
  std::vector<Map> grads = tap_grads;
  grads.emplace_back();
  return critic_.backward_taps(grads);
}

// ---- objectives

template <typename T>
double lsgan_d_loss(const BasicFeatureMap<T>& real_scores, const BasicFeatureMap<T>& fake_scores,
                    BasicFeatureMap<T>* grad_real, BasicFeatureMap<T>* grad_fake) {
  const double nr = static_cast<double>(real_scores.size());
  const double nf = static_cast<double>(fake_scores.size());
  if (nr == 0 || nf == 0) throw ShapeError("lsgan_d_loss: empty score map");
  double lr = 0.0, lf = 0.0;
  if (grad_real) *grad_real = zeros_like(real_scores);
  if (grad_fake) *grad_fake = zeros_like(fake_scores);
  for (std::size_t i = 0; i < real_scores.size(); ++i) {
    const double d = double(real_scores.data[i]) - 1.0;
    lr += d * d;
    if (grad_real) grad_real->data[i] = static_cast<T>(2.0 * d / nr);
  }
  for (std::size_t i = 0; i < fake_scores.size(); ++i) {
    const double f = fake_scores.data[i];
    lf += f * f;
    if (grad_fake) grad_fake->data[i] = static_cast<T>(2.0 * f / nf);
  }
  return lr / nr + lf / nf;
}

template <typename T>
double lsgan_g_loss(const BasicFeatureMap<T>& fake_scores, BasicFeatureMap<T>* grad_fake) {
  const double n = static_cast<double>(fake_scores.size());
  if (n == 0) throw ShapeError("lsgan_g_loss: empty score map");
  if (grad_fake) *grad_fake = zeros_like(fake_scores);
  double l = 0.0;
  for (std::size_t i = 0; i < fake_scores.size(); ++i) {
    const double d = double(fake_scores.data[i]) - 1.0;
    l += d * d;
    if (grad_fake) grad_fake->data[i] = static_cast<T>(2.0 * d / n);
  }
  return l / n;
}

namespace {

template <typename T>
double tap_l1(const std::vector<BasicFeatureMap<T>>& a, const std::vector<BasicFeatureMap<T>>& b,
              std::vector<BasicFeatureMap<T>>* grads) {
  if (a.size() != b.size()) throw ShapeError("reconstruction_loss: tap count mismatch");
  double total = 0.0;
  if (grads) grads->clear();
  for (std::size_t k = 0; k < a.size(); ++k) {
    BasicFeatureMap<T>::require_same_shape(a[k], b[k], "reconstruction_loss");
    const double n = static_cast<double>(a[k].size());
    if (n == 0) {
      if (grads) grads->push_back(zeros_like(a[k]));
      continue;
    }
    double s = 0.0;
    BasicFeatureMap<T> g;
    if (grads) g = zeros_like(a[k]);
    for (std::size_t i = 0; i < a[k].size(); ++i) {
      const double d = double(a[k].data[i]) - double(b[k].data[i]);
      s += std::abs(d);
      if (grads) g.data[i] = static_cast<T>(d > 0 ? 1.0 / n : (d < 0 ? -1.0 / n : 0.0));
    }
    total += s / n;
    if (grads) grads->push_back(std::move(g));
  }
  return total;
}

}  // namespace

template <typename T>
double reconstruction_loss(std::span<FeatureExtractor<T>* const> extractors, const BasicFeatureMap<T>& target,
                           const BasicFeatureMap<T>& generated) {
  BasicFeatureMap<T>::require_same_shape(target, generated, "reconstruction_loss");
  nn::NoGradGuard no_grad;
  double total = 0.0;
  for (auto* e : extractors) total += tap_l1<T>(e->extract(generated), e->extract(target), nullptr);
  return total;
}

template <typename T>
LossWithGrad<T> reconstruction_loss_grad(std::span<FeatureExtractor<T>* const> extractors,
                                         const BasicFeatureMap<T>& target, const BasicFeatureMap<T>& generated) {
  BasicFeatureMap<T>::require_same_shape(target, generated, "reconstruction_loss");
  LossWithGrad<T> out{0.0, zeros_like(generated)};
  for (auto* e : extractors) {
    std::vector<BasicFeatureMap<T>> target_taps;
    {
      nn::NoGradGuard no_grad;
      target_taps = e->extract(target);
    }
    const auto gen_taps = e->extract(generated);
    std::vector<BasicFeatureMap<T>> grads;
    out.value += tap_l1(gen_taps, target_taps, &grads);
    out.grad += e->backward(grads);
  }
  return out;
}

double total_loss(std::span<const double> g_losses, std::span<const double> rec_losses, double lambda) {
  if (g_losses.size() != rec_losses.size()) throw ShapeError("total_loss: per-frame term counts differ");
  double total = 0.0;
  for (std::size_t i = 0; i < g_losses.size(); ++i) total += g_losses[i] + lambda * rec_losses[i];
  return total;
}

#define DWNET_INSTANTIATE_LOSSES(T)                                                                           \
  template class PatchCritic<T>;                                                                              \
  template class IdentityExtractor<T>;                                                                        \
  template class RandomConvExtractor<T>;                                                                      \
  template class CriticFeatureExtractor<T>;                                                                   \
  template double lsgan_d_loss<T>(const BasicFeatureMap<T>&, const BasicFeatureMap<T>&, BasicFeatureMap<T>*, \
                                  BasicFeatureMap<T>*);                                                       \
  template double lsgan_g_loss<T>(const BasicFeatureMap<T>&, BasicFeatureMap<T>*);                            \
  template double reconstruction_loss<T>(std::span<FeatureExtractor<T>* const>, const BasicFeatureMap<T>&,   \
                                         const BasicFeatureMap<T>&);                                          \
  template LossWithGrad<T> reconstruction_loss_grad<T>(std::span<FeatureExtractor<T>* const>,                 \
                                                       const BasicFeatureMap<T>&, const BasicFeatureMap<T>&);

DWNET_INSTANTIATE_LOSSES(float)
DWNET_INSTANTIATE_LOSSES(double)

#undef DWNET_INSTANTIATE_LOSSES

}  // namespace dwnet
