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
#include "dwnet/refiner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dwnet/correspondence.hpp"
#include "dwnet/optim.hpp"

namespace dwnet {

namespace {

template <typename T>
void scale_axes(BasicFeatureMap<T>& xy, T sx, T sy) {
  for (auto& v : xy.channel(0)) v *= sx;
  for (auto& v : xy.channel(1)) v *= sy;
}

}  // namespace

template <typename T>
std::array<T, 2> RefinerNet<T>::pixel_scale(const Map& source) const {
  if (!config_.pixel_units) return {T(1), T(1)};
  return {static_cast<T>(std::max(1, source.width - 1) * 0.5), static_cast<T>(std::max(1, source.height - 1) * 0.5)};
}

template <typename T>
RefinerNet<T>::RefinerNet(const RefinerConfig& config)
    : config_(config), net_(std::make_unique<nn::Sequential<T>>()), sampler_(std::make_unique<BilinearSampler<T>>()) {
  if (config.image_channels < 1 || config.pose_channels < 0 || config.width < 1 || config.blocks < 0) {
    throw ConfigError("RefinerNet: invalid configuration");
  }
  net_->template emplace<nn::Conv2d<T>>(nn::ConvSpec{config.input_channels(), config.width, 3, 1, 1, true});
  net_->template emplace<nn::Relu<T>>();
  for (int b = 0; b < config.blocks; ++b) net_->template emplace<nn::ResnetBlock<T>>(config.width, config.normalize);
  last_ = &net_->template emplace<nn::Conv2d<T>>(nn::ConvSpec{config.width, 2, 3, 1, 1, true});
}

template <typename T>
void RefinerNet<T>::init(Rng& rng) {
  for (std::size_t i = 0; i < net_->size(); ++i) {
    auto& layer = net_->layer(i);
    if (auto* conv = dynamic_cast<nn::Conv2d<T>*>(&layer)) {
      conv->init_he(rng);
    } else if (auto* block = dynamic_cast<nn::ResnetBlock<T>*>(&layer)) {
      block->init_he(rng);
    }
  }
  last_->init_zero();
}

template <typename T>
typename RefinerNet<T>::Grid RefinerNet<T>::refine(const Map& source, const Grid& coarse, const Map& pose) {
  if (source.channels != config_.image_channels) {
    throw ShapeError("refine: source has " + std::to_string(source.channels) + " channels, expected " +
                     std::to_string(config_.image_channels));
  }
  if (pose.channels != config_.pose_channels || pose.height != coarse.height() || pose.width != coarse.width()) {
    throw ShapeError("refine: pose planes " + pose.shape_string() + " do not match grid " +
                     std::to_string(coarse.height()) + "x" + std::to_string(coarse.width()));
  }
  const Map deformed = sampler_->forward(source, coarse);
  const auto scale = pixel_scale(source);
  Grid rel = to_relative(coarse);
  scale_axes(rel.coords, scale[0], scale[1]);
  const Map* parts[] = {&deformed, &pose, &rel.coords};
  const Map input = concat_channels<T>(std::span<const Map* const>(parts));
  Grid refined(net_->forward(input));
  scale_axes(refined.coords, T(1) / scale[0], T(1) / scale[1]);
  refined.coords += coarse.coords;
  scales_.push(scale);
  return refined;
}

template <typename T>
typename RefinerNet<T>::Grid RefinerNet<T>::refine(const Map& source, const Grid& coarse,
                                                   const IuvMap& driving_pose) {
  const Map pose = pose_planes_at(driving_pose, coarse.height(), coarse.width(), config_.n_parts).template cast<T>();
  return refine(source, coarse, pose);
}

template <typename T>
typename RefinerNet<T>::Gradients RefinerNet<T>::backward(const Grid& grad_refined) {
  const auto scale = scales_.pop("RefinerNet");
  Map grad_residual = grad_refined.coords;
  scale_axes(grad_residual, T(1) / scale[0], T(1) / scale[1]);
  const Map grad_input = net_->backward(grad_residual);
  const int counts[] = {config_.image_channels, config_.pose_channels, 2};
  auto pieces = split_channels(grad_input, std::span<const int>(counts));
  scale_axes(pieces[2], scale[0], scale[1]);
  SampleGradients<T> s = sampler_->backward(pieces[0]);
  Gradients g{std::move(s.input), Grid(grad_refined.coords), std::move(pieces[1])};
  g.coarse.coords += pieces[2];
  g.coarse.coords += s.grid.coords;
  return g;
}

template class RefinerNet<float>;
template class RefinerNet<double>;

FeatureMap pose_planes_at(const IuvMap& driving_pose, int height, int width, int n_parts) {
  if (driving_pose.height == height && driving_pose.width == width) return iuv_planes(driving_pose, n_parts);
  return iuv_planes(downsample_iuv(driving_pose, height, width), n_parts);
}

namespace {

// Smoothing width of the grid corruption, in cells.
constexpr double kNoiseCorrelationCells = 1.0;

// Separable Gaussian blur with clamped borders.
std::vector<double> blur(const std::vector<double>& in, int h, int w, double sigma) {
  if (sigma <= 0.0) return in;
  const int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(2 * radius + 1);
  for (int i = -radius; i <= radius; ++i) k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  const double norm = std::accumulate(k.begin(), k.end(), 0.0);
  for (auto& v : k) v /= norm;
  std::vector<double> tmp(in.size()), out(in.size());
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += k[i + radius] * in[std::size_t(y) * w + std::clamp(x + i, 0, w - 1)];
      tmp[std::size_t(y) * w + x] = s;
    }
  }
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double s = 0.0;
      for (int i = -radius; i <= radius; ++i) s += k[i + radius] * tmp[std::size_t(std::clamp(y + i, 0, h - 1)) * w + x];
      out[std::size_t(y) * w + x] = s;
    }
  }
  return out;
}

}  // namespace

WarpGrid smooth_noise_field(int height, int width, double sigma_px, int source_h, int source_w,
                            double correlation_cells, Rng& rng) {
  WarpGrid out(height, width);
  const std::size_t n = out.coords.plane();
  const int sizes[] = {source_w, source_h};
  for (int axis = 0; axis < 2; ++axis) {
    std::vector<double> white(n);
    for (auto& v : white) v = rng.normal();
    std::vector<double> field = blur(white, height, width, correlation_cells);
    double ss = 0.0;
    for (double v : field) ss += v * v;
    const double rms = std::sqrt(ss / static_cast<double>(n));
    const double to_norm = sizes[axis] > 1 ? 2.0 / (sizes[axis] - 1) : 0.0;
    const double scale = rms > 0.0 ? sigma_px / rms * to_norm : 0.0;
    auto plane = out.coords.channel(axis);
    for (std::size_t i = 0; i < n; ++i) plane[i] = static_cast<float>(field[i] * scale);
  }
  return out;
}

std::vector<RefinerExample> make_refiner_examples(const synth::SyntheticSequence& sequence, int grid_size,
                                                  double noise_px, std::uint64_t seed, int n_parts) {
  const Frame& source = sequence.video.source;
  const int h = source.image.height;
  const int w = source.image.width;
  const PartIndexUV index = PartIndexUV::build(source.iuv, n_parts);
  Rng rng(seed);
  std::vector<RefinerExample> out;
  for (std::size_t k = 0; k < sequence.video.driving.size(); ++k) {
    const Frame& drv = sequence.video.driving[k];
    const DownsampledGrid coarse = downsample_grid(coarse_warp(index, drv.iuv), grid_size, grid_size);
    CorrespondenceResult truth{sequence.ground_truth[k], sequence.masks[k], {}};
    DownsampledGrid target = downsample_grid(truth, grid_size, grid_size);
    RefinerExample ex;
    ex.source = source.image;
    ex.clean_coarse = coarse.grid;
    ex.noise_px = noise_px;
    ex.coarse = coarse.grid;
    ex.coarse.coords += smooth_noise_field(grid_size, grid_size, noise_px, h, w, kNoiseCorrelationCells, rng).coords;
    ex.pose = pose_planes_at(drv.iuv, grid_size, grid_size, n_parts);
    ex.target = std::move(target.grid);
    ex.mask = std::move(target.matched);
    out.push_back(std::move(ex));
  }
  return out;
}

double refiner_endpoint_error(RefinerNet<float>& net, const std::vector<RefinerExample>& examples) {
  nn::NoGradGuard no_grad;
  double total = 0.0;
  for (const auto& ex : examples) {
    const WarpGrid refined = net.refine(ex.source, ex.coarse, ex.pose);
    total += endpoint_error(refined, ex.target, ex.source.height, ex.source.width, ex.mask);
  }
  return examples.empty() ? 0.0 : total / static_cast<double>(examples.size());
}

namespace {

double coarse_endpoint_error(const std::vector<RefinerExample>& examples) {
  double total = 0.0;
  for (const auto& ex : examples) {
    total += endpoint_error(ex.coarse, ex.target, ex.source.height, ex.source.width, ex.mask);
  }
  return examples.empty() ? 0.0 : total / static_cast<double>(examples.size());
}

// Squared endpoint loss in source pixels over masked cells; writes its
// gradient with respect to `refined`.
double squared_endpoint_loss(const WarpGrid& refined, const RefinerExample& ex, WarpGrid& grad) {
  const std::size_t n = refined.coords.plane();
  const double sx = ex.source.width > 1 ? 0.5 * (ex.source.width - 1) : 0.0;
  const double sy = ex.source.height > 1 ? 0.5 * (ex.source.height - 1) : 0.0;
  std::size_t count = 0;
  for (auto m : ex.mask) count += m ? 1 : 0;
  grad = WarpGrid(refined.height(), refined.width());
  if (count == 0) return 0.0;
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!ex.mask[i]) continue;
    const double dx = (double(refined.coords.data[i]) - ex.target.coords.data[i]) * sx;
    const double dy = (double(refined.coords.data[n + i]) - ex.target.coords.data[n + i]) * sy;
    loss += dx * dx + dy * dy;
    grad.coords.data[i] = static_cast<float>(2.0 * dx * sx / count);
    grad.coords.data[n + i] = static_cast<float>(2.0 * dy * sy / count);
  }
  return loss / static_cast<double>(count);
}

}  // namespace

RefinerTrainingResult train_refiner_standalone(const std::vector<RefinerExample>& train,
                                               const std::vector<RefinerExample>& held_out,
                                               const RefinerTrainingConfig& config) {
  if (config.ema_decay < 0.0 || config.ema_decay >= 1.0) throw ConfigError("refiner: ema_decay must be in [0, 1)");
  RefinerTrainingResult result{RefinerNet<float>(config.net), 0.0, {}, {}};
  RefinerNet<float> trained(config.net);
  Rng init_rng = Rng::stream(config.seed, 1);
  trained.init(init_rng);
  const auto live = trained.parameters();
  const auto averaged = result.net.parameters();
  for (std::size_t p = 0; p < live.size(); ++p) averaged[p]->value = live[p]->value;
  const float decay = static_cast<float>(config.ema_decay);
  result.baseline = coarse_endpoint_error(held_out);
  nn::Optimizer<float> opt(live);
  Rng order_rng = Rng::stream(config.seed, 2);
  Rng noise_rng = Rng::stream(config.seed, 3);
  std::vector<WarpGrid> coarse(train.size());
  for (std::size_t i = 0; i < train.size(); ++i) coarse[i] = train[i].coarse;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  const std::int64_t total_steps = static_cast<std::int64_t>(config.epochs) * static_cast<std::int64_t>(train.size());
  const nn::LinearDecay schedule(config.learning_rate, total_steps);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[static_cast<std::size_t>(order_rng.uniform_int(0, std::int64_t(i) - 1))]);
    }
    if (config.resample_noise && epoch > 0) {
      for (std::size_t i = 0; i < train.size(); ++i) {
        const RefinerExample& ex = train[i];
        coarse[i] = ex.clean_coarse;
        coarse[i].coords += smooth_noise_field(ex.clean_coarse.height(), ex.clean_coarse.width(), ex.noise_px,
                                               ex.source.height, ex.source.width, kNoiseCorrelationCells, noise_rng)
                                .coords;
      }
    }
    double epoch_loss = 0.0;
    for (std::size_t idx : order) {
      const RefinerExample& ex = train[idx];
      opt.zero_grad();
      const WarpGrid refined = trained.refine(ex.source, coarse[idx], ex.pose);
      WarpGrid grad;
      const double loss = squared_endpoint_loss(refined, ex, grad);
      if (!std::isfinite(loss)) {
        trained.clear_cache();
        throw NumericError("train_refiner_standalone: non-finite loss at epoch " + std::to_string(epoch));
      }
      trained.backward(grad);
      opt.step(schedule.at(opt.steps_taken()));
      for (std::size_t p = 0; p < live.size(); ++p) {
        auto& avg = averaged[p]->value;
        const auto& cur = live[p]->value;
        for (std::size_t k = 0; k < avg.size(); ++k) avg[k] = decay * avg[k] + (1.0f - decay) * cur[k];
      }
      epoch_loss += loss;
    }
    result.train_loss.push_back(train.empty() ? 0.0 : epoch_loss / static_cast<double>(train.size()));
    result.curve.push_back(refiner_endpoint_error(result.net, held_out));
  }
  return result;
}

}  // namespace dwnet
