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
#include "dwnet/nn.hpp"

#include <Eigen/Core>
#include <cmath>

#include "dwnet/parallel.hpp"

namespace dwnet::nn {
namespace {

thread_local bool g_grad_enabled = true;

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatrixMap = Eigen::Map<RowMatrix<T>>;
template <typename T>
using ConstMatrixMap = Eigen::Map<const RowMatrix<T>>;

// Work per parallel chunk, in multiply-adds.
constexpr std::size_t kMinChunkWork = std::size_t{1} << 18;

std::size_t rows_per_chunk(std::size_t work_per_row) {
  return std::max<std::size_t>(1, kMinChunkWork / std::max<std::size_t>(1, work_per_row));
}

template <typename T>
void im2col(const BasicFeatureMap<T>& in, int k, int stride, int pad, int out_h, int out_w, std::vector<T>& cols) {
  const std::size_t ncols = static_cast<std::size_t>(out_h) * out_w;
  cols.assign(static_cast<std::size_t>(in.channels) * k * k * ncols, T(0));
  for (int c = 0; c < in.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        T* row = cols.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * ncols;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= in.height) continue;
          const T* src = in.data.data() + (static_cast<std::size_t>(c) * in.height + iy) * in.width;
          T* dst = row + static_cast<std::size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < in.width) dst[ox] = src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const std::vector<T>& cols, int channels, int k, int stride, int pad, int out_h, int out_w,
            BasicFeatureMap<T>& grad_in) {
  const std::size_t ncols = static_cast<std::size_t>(out_h) * out_w;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx) {
        const T* row = cols.data() + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * ncols;
        for (int oy = 0; oy < out_h; ++oy) {
          const int iy = oy * stride - pad + ky;
          if (iy < 0 || iy >= grad_in.height) continue;
          T* dst = grad_in.data.data() + (static_cast<std::size_t>(c) * grad_in.height + iy) * grad_in.width;
          const T* src = row + static_cast<std::size_t>(oy) * out_w;
          for (int ox = 0; ox < out_w; ++ox) {
            const int ix = ox * stride - pad + kx;
            if (ix >= 0 && ix < grad_in.width) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

template <typename T>
void check_weight(const BasicFeatureMap<T>& input, const Param<T>& weight, const Param<T>* bias) {
  if (weight.shape.size() != 4 || weight.shape[2] != weight.shape[3]) {
    throw ShapeError("conv2d: weight must have shape (out, in, k, k)");
  }
  if (weight.shape[1] != input.channels) {
    throw ShapeError("conv2d: input has " + std::to_string(input.channels) + " channels but weight expects " +
                     std::to_string(weight.shape[1]));
  }
  if (bias && bias->size() != static_cast<std::size_t>(weight.shape[0])) {
    throw ShapeError("conv2d: bias size does not match output channels");
  }
}

template <typename T>
BasicFeatureMap<T> conv_from_cols(const std::vector<T>& cols, const Param<T>& weight, const Param<T>* bias,
                                  int out_h, int out_w) {
  const int out_c = weight.shape[0];
  const int ckk = weight.shape[1] * weight.shape[2] * weight.shape[3];
  const int ncols = out_h * out_w;
  BasicFeatureMap<T> out(out_c, out_h, out_w);
  ConstMatrixMap<T> w(weight.value.data(), out_c, ckk);
  ConstMatrixMap<T> c(cols.data(), ckk, ncols);
  MatrixMap<T> y(out.data.data(), out_c, ncols);
  parallel_for(static_cast<std::size_t>(out_c), rows_per_chunk(static_cast<std::size_t>(ckk) * ncols),
               [&](std::size_t b, std::size_t e) {
                 const auto n = static_cast<Eigen::Index>(e - b);
                 y.middleRows(b, n).noalias() = w.middleRows(b, n) * c;
               });
  if (bias) {
    for (int o = 0; o < out_c; ++o) y.row(o).array() += bias->value[o];
  }
  return out;
}

}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

int conv_output_size(int in, int kernel, int stride, int padding) {
  if (stride < 1 || padding < 0 || kernel < 1) throw ShapeError("conv: invalid kernel/stride/padding");
  const int out = (in + 2 * padding - kernel) / stride + 1;
  if (in + 2 * padding < kernel || out <= 0) {
    throw ShapeError("conv: input of size " + std::to_string(in) + " too small for kernel " +
                     std::to_string(kernel));
  }
  return out;
}

template <typename T>
BasicFeatureMap<T> conv2d(const BasicFeatureMap<T>& input, const Param<T>& weight, const Param<T>* bias,
                          int stride, int padding) {
  check_weight(input, weight, bias);
  const int k = weight.shape[2];
  const int oh = conv_output_size(input.height, k, stride, padding);
  const int ow = conv_output_size(input.width, k, stride, padding);
  std::vector<T> cols;
  im2col(input, k, stride, padding, oh, ow, cols);
  return conv_from_cols(cols, weight, bias, oh, ow);
}

// ---- Conv2d

template <typename T>
Conv2d<T>::Conv2d(const ConvSpec& spec)
    : spec_(spec),
      weight_("weight", {spec.out_channels, spec.in_channels, spec.kernel, spec.kernel}),
      bias_("bias", {spec.bias ? spec.out_channels : 0}) {
  if (spec.in_channels < 1 || spec.out_channels < 1) throw ShapeError("Conv2d: channel counts must be >= 1");
  if (spec.stride < 1 || spec.padding < 0 || spec.kernel < 1) {
    throw ShapeError("Conv2d: invalid kernel/stride/padding");
  }
}

template <typename T>
void Conv2d<T>::init_he(Rng& rng) {
  const double fan_in = static_cast<double>(spec_.in_channels) * spec_.kernel * spec_.kernel;
  const double stddev = std::sqrt(2.0 / fan_in);
  for (auto& v : weight_.value) v = static_cast<T>(rng.normal(0.0, stddev));
  std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <typename T>
void Conv2d<T>::init_zero() {
  std::fill(weight_.value.begin(), weight_.value.end(), T(0));
  std::fill(bias_.value.begin(), bias_.value.end(), T(0));
}

template <typename T>
typename Conv2d<T>::Map Conv2d<T>::forward(const Map& x) {
  const Param<T>* b = spec_.bias ? &bias_ : nullptr;
  check_weight(x, weight_, b);
  State s;
  s.in_h = x.height;
  s.in_w = x.width;
  s.out_h = conv_output_size(x.height, spec_.kernel, spec_.stride, spec_.padding);
  s.out_w = conv_output_size(x.width, spec_.kernel, spec_.stride, spec_.padding);
  im2col(x, spec_.kernel, spec_.stride, spec_.padding, s.out_h, s.out_w, s.cols);
  Map out = conv_from_cols(s.cols, weight_, b, s.out_h, s.out_w);
  cache_.push(std::move(s));
  return out;
}

template <typename T>
typename Conv2d<T>::Map Conv2d<T>::backward(const Map& grad_out) {
  State s = cache_.pop("Conv2d");
  if (grad_out.channels != spec_.out_channels || grad_out.height != s.out_h || grad_out.width != s.out_w) {
    throw ShapeError("Conv2d::backward: upstream gradient shape " + grad_out.shape_string() +
                     " does not match forward output");
  }
  const int out_c = spec_.out_channels;
  const int ckk = spec_.in_channels * spec_.kernel * spec_.kernel;
  const int ncols = s.out_h * s.out_w;
  ConstMatrixMap<T> dy(grad_out.data.data(), out_c, ncols);
  ConstMatrixMap<T> cols(s.cols.data(), ckk, ncols);
  MatrixMap<T> dw(weight_.grad.data(), out_c, ckk);
  ConstMatrixMap<T> w(weight_.value.data(), out_c, ckk);

  parallel_for(static_cast<std::size_t>(out_c), rows_per_chunk(static_cast<std::size_t>(ckk) * ncols),
               [&](std::size_t b, std::size_t e) {
                 const auto n = static_cast<Eigen::Index>(e - b);
                 dw.middleRows(b, n).noalias() += dy.middleRows(b, n) * cols.transpose();
               });
  if (spec_.bias) {
    for (int o = 0; o < out_c; ++o) bias_.grad[o] += dy.row(o).sum();
  }

  std::vector<T> dcols(static_cast<std::size_t>(ckk) * ncols);
  MatrixMap<T> dc(dcols.data(), ckk, ncols);
  parallel_for(static_cast<std::size_t>(ckk), rows_per_chunk(static_cast<std::size_t>(out_c) * ncols),
               [&](std::size_t b, std::size_t e) {
                 const auto n = static_cast<Eigen::Index>(e - b);
                 dc.middleRows(b, n).noalias() = w.middleCols(b, n).transpose() * dy;
               });
  Map grad_in(spec_.in_channels, s.in_h, s.in_w);
  col2im(dcols, spec_.in_channels, spec_.kernel, spec_.stride, spec_.padding, s.out_h, s.out_w, grad_in);
  return grad_in;
}

template <typename T>
void Conv2d<T>::collect_params(std::vector<Param<T>*>& out) {
  out.push_back(&weight_);
  if (spec_.bias) out.push_back(&bias_);
}

// ---- activations

template <typename T>
typename Relu<T>::Map Relu<T>::forward(const Map& x) {
  Map y = x;
  for (auto& v : y.data) v = v > T(0) ? v : T(0);
  cache_.push(x);
  return y;
}

template <typename T>
typename Relu<T>::Map Relu<T>::backward(const Map& grad_out) {
  Map x = cache_.pop("Relu");
  Map::require_same_shape(x, grad_out, "Relu::backward");
  for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] = x.data[i] > T(0) ? grad_out.data[i] : T(0);
  return x;
}

template <typename T>
typename LeakyRelu<T>::Map LeakyRelu<T>::forward(const Map& x) {
  Map y = x;
  for (auto& v : y.data) v = v > T(0) ? v : slope_ * v;
  cache_.push(x);
  return y;
}

template <typename T>
typename LeakyRelu<T>::Map LeakyRelu<T>::backward(const Map& grad_out) {
  Map x = cache_.pop("LeakyRelu");
  Map::require_same_shape(x, grad_out, "LeakyRelu::backward");
  for (std::size_t i = 0; i < x.data.size(); ++i) {
    x.data[i] = x.data[i] > T(0) ? grad_out.data[i] : slope_ * grad_out.data[i];
  }
  return x;
}

template <typename T>
typename Tanh<T>::Map Tanh<T>::forward(const Map& x) {
  Map y = x;
  for (auto& v : y.data) v = std::tanh(v);
  cache_.push(y);
  return y;
}

template <typename T>
typename Tanh<T>::Map Tanh<T>::backward(const Map& grad_out) {
  Map y = cache_.pop("Tanh");
  Map::require_same_shape(y, grad_out, "Tanh::backward");
  for (std::size_t i = 0; i < y.data.size(); ++i) y.data[i] = grad_out.data[i] * (T(1) - y.data[i] * y.data[i]);
  return y;
}

// ---- instance norm

template <typename T>
typename InstanceNorm<T>::Map InstanceNorm<T>::forward(const Map& x) {
  if (x.channels != channels_) {
    throw ShapeError("InstanceNorm: expected " + std::to_string(channels_) + " channels, got " +
                     std::to_string(x.channels));
  }
  State s;
  s.normalized = Map(x.channels, x.height, x.width);
  s.inv_std.resize(x.channels);
  const std::size_t n = x.plane();
  for (int c = 0; c < x.channels; ++c) {
    auto in = x.channel(c);
    auto out = s.normalized.channel(c);
    T mean = 0;
    for (T v : in) mean += v;
    mean /= static_cast<T>(n);
    T var = 0;
    for (T v : in) var += (v - mean) * (v - mean);
    var /= static_cast<T>(n);
    const T inv = T(1) / std::sqrt(var + eps_);
    for (std::size_t i = 0; i < n; ++i) out[i] = (in[i] - mean) * inv;
    s.inv_std[c] = inv;
  }
  Map y = s.normalized;
  cache_.push(std::move(s));
  return y;
}

template <typename T>
typename InstanceNorm<T>::Map InstanceNorm<T>::backward(const Map& grad_out) {
  State s = cache_.pop("InstanceNorm");
  Map::require_same_shape(s.normalized, grad_out, "InstanceNorm::backward");
  Map grad_in(grad_out.channels, grad_out.height, grad_out.width);
  const std::size_t n = grad_out.plane();
  const T inv_n = T(1) / static_cast<T>(n);
  for (int c = 0; c < grad_out.channels; ++c) {
    auto dy = grad_out.channel(c);
    auto xh = s.normalized.channel(c);
    auto dx = grad_in.channel(c);
    T sum_dy = 0, sum_dy_xh = 0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_dy += dy[i];
      sum_dy_xh += dy[i] * xh[i];
    }
    for (std::size_t i = 0; i < n; ++i) {
      dx[i] = s.inv_std[c] * (dy[i] - inv_n * sum_dy - xh[i] * inv_n * sum_dy_xh);
    }
  }
  return grad_in;
}

// ---- upsample

template <typename T>
typename Upsample2x<T>::Map Upsample2x<T>::forward(const Map& x) {
  if (x.height < 1 || x.width < 1) throw ShapeError("Upsample2x: empty input");
  Map y(x.channels, 2 * x.height, 2 * x.width);
  for (int c = 0; c < x.channels; ++c) {
    for (int yy = 0; yy < y.height; ++yy) {
      for (int xx = 0; xx < y.width; ++xx) y.at(c, yy, xx) = x.at(c, yy / 2, xx / 2);
    }
  }
  cache_.push(0);
  return y;
}

template <typename T>
typename Upsample2x<T>::Map Upsample2x<T>::backward(const Map& grad_out) {
  cache_.pop("Upsample2x");
  if (grad_out.height % 2 != 0 || grad_out.width % 2 != 0) {
    throw ShapeError("Upsample2x::backward: odd upstream gradient size");
  }
  Map g(grad_out.channels, grad_out.height / 2, grad_out.width / 2);
  for (int c = 0; c < grad_out.channels; ++c) {
    for (int yy = 0; yy < grad_out.height; ++yy) {
      for (int xx = 0; xx < grad_out.width; ++xx) g.at(c, yy / 2, xx / 2) += grad_out.at(c, yy, xx);
    }
  }
  return g;
}

// ---- sequential

template <typename T>
typename Sequential<T>::Map Sequential<T>::forward(const Map& x) {
  Map h = x;
  for (auto& l : layers_) h = l->forward(h);
  return h;
}

template <typename T>
typename Sequential<T>::Map Sequential<T>::backward(const Map& grad_out) {
  Map g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

template <typename T>
void Sequential<T>::collect_params(std::vector<Param<T>*>& out) {
  for (auto& l : layers_) l->collect_params(out);
}

template <typename T>
std::size_t Sequential<T>::cache_depth() const {
  std::size_t d = 0;
  for (const auto& l : layers_) d += l->cache_depth();
  return d;
}

template <typename T>
void Sequential<T>::clear_cache() {
  for (auto& l : layers_) l->clear_cache();
}

// ---- resnet block

template <typename T>
ResnetBlock<T>::ResnetBlock(int channels, bool normalize) : channels_(channels), normalize_(normalize) {
  first_ = &branch_.template emplace<Conv2d<T>>(ConvSpec{channels, channels, 3, 1, 1, !normalize});
  if (normalize) branch_.template emplace<InstanceNorm<T>>(channels);
  branch_.template emplace<Relu<T>>();
  second_ = &branch_.template emplace<Conv2d<T>>(ConvSpec{channels, channels, 3, 1, 1, !normalize});
  if (normalize) branch_.template emplace<InstanceNorm<T>>(channels);
}

template <typename T>
void ResnetBlock<T>::init_he(Rng& rng) {
  first_->init_he(rng);
  second_->init_he(rng);
}

template <typename T>
typename ResnetBlock<T>::Map ResnetBlock<T>::forward(const Map& x) {
  if (x.channels != channels_) {
    throw ShapeError("ResnetBlock: expected " + std::to_string(channels_) + " channels, got " +
                     std::to_string(x.channels));
  }
  Map y = branch_.forward(x);
  y += x;
  return y;
}

template <typename T>
typename ResnetBlock<T>::Map ResnetBlock<T>::backward(const Map& grad_out) {
  Map g = branch_.backward(grad_out);
  g += grad_out;
  return g;
}

template BasicFeatureMap<float> conv2d(const BasicFeatureMap<float>&, const Param<float>&, const Param<float>*,
                                       int, int);
template BasicFeatureMap<double> conv2d(const BasicFeatureMap<double>&, const Param<double>&,
                                        const Param<double>*, int, int);

template class Conv2d<float>;
template class Conv2d<double>;
template class Relu<float>;
template class Relu<double>;
template class LeakyRelu<float>;
template class LeakyRelu<double>;
template class Tanh<float>;
template class Tanh<double>;
template class InstanceNorm<float>;
template class InstanceNorm<double>;
template class Upsample2x<float>;
template class Upsample2x<double>;
template class Sequential<float>;
template class Sequential<double>;
template class ResnetBlock<float>;
template class ResnetBlock<double>;

}  // namespace dwnet::nn
