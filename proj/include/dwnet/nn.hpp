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

#include <cstddef>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dwnet/error.hpp"
#include "dwnet/rng.hpp"
#include "dwnet/tensor.hpp"

namespace dwnet::nn {

// Whether forward passes record the state their backward pass needs.
// Thread-local; inference code disables it with NoGradGuard.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

template <typename T>
struct Param {
  std::string name;
  std::vector<int> shape;
  std::vector<T> value;
  std::vector<T> grad;

  Param() = default;
  Param(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
    std::size_t count = 1;
    for (int d : shape) count *= static_cast<std::size_t>(d);
    value.assign(count, T(0));
    grad.assign(count, T(0));
  }

  std::size_t size() const { return value.size(); }
  void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

// Forward state is kept on a per-module stack. A module may be applied several
// times before backward runs (shared encoders, chained frames); backward calls
// must then come in exactly the reverse order.
template <typename State>
class CacheStack {
 public:
  void push(State s) {
    if (grad_enabled()) stack_.push_back(std::move(s));
  }
  State pop(const char* who) {
    if (stack_.empty()) {
      throw Error(std::string(who) + ": backward called without cached forward state");
    }
    State s = std::move(stack_.back());
    stack_.pop_back();
    return s;
  }
  std::size_t size() const { return stack_.size(); }
  void clear() { stack_.clear(); }

 private:
  std::vector<State> stack_;
};

template <typename T>
class Module {
 public:
  using Map = BasicFeatureMap<T>;

  virtual ~Module() = default;

  virtual Map forward(const Map& x) = 0;
  // Consumes the most recent cached forward state, accumulates parameter
  // gradients and returns the gradient with respect to that forward's input.
  virtual Map backward(const Map& grad_out) = 0;

  virtual void collect_params(std::vector<Param<T>*>& /*out*/) {}
  virtual std::size_t cache_depth() const = 0;
  virtual void clear_cache() = 0;

  std::vector<Param<T>*> parameters() {
    std::vector<Param<T>*> out;
    collect_params(out);
    return out;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }
};

template <typename T>
using ModulePtr = std::unique_ptr<Module<T>>;

struct ConvSpec {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int padding = 1;
  bool bias = true;
};

template <typename T>
class Conv2d final : public Module<T> {
 public:
  using Map = BasicFeatureMap<T>;

  explicit Conv2d(const ConvSpec& spec);

  Map forward(const Map& x) override;
  Map backward(const Map& grad_out) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  std::size_t cache_depth() const override { return cache_.size(); }
  void clear_cache() override { cache_.clear(); }

  const ConvSpec& spec() const { return spec_; }
  Param<T>& weight() { return weight_; }
  Param<T>& bias() { return bias_; }
  const Param<T>& weight() const { return weight_; }

  // He-normal weights, zero bias.
  void init_he(Rng& rng);
  void init_zero();

 private:
  struct State {
    std::vector<T> cols;
    int in_h = 0, in_w = 0, out_h = 0, out_w = 0;
  };

  ConvSpec spec_;
  Param<T> weight_;
  Param<T> bias_;
  CacheStack<State> cache_;
};

template <typename T>
class Relu final : public Module<T> {
 public:
  using Map = BasicFeatureMap<T>;
  Map forward(const Map& x) override;
  Map backward(const Map& grad_out) override;
  std::size_t cache_depth() const override { return cache_.size(); }
  void clear_cache() override { cache_.clear(); }

 private:
  CacheStack<Map> cache_;
};

template <typename T>
class LeakyRelu final : public Module<T> {
 public:
  using Map = BasicFeatureMap<T>;
  explicit LeakyRelu(T slope = T(0.2)) : slope_(slope) {}
  Map forward(const Map& x) override;
  Map backward(const Map& grad_out) override;
  std::size_t cache_depth() const override { return cache_.size(); }
  void clear_cache() override { cache_.clear(); }

 private:
  T slope_;
  CacheStack<Map> cache_;
};

template <typename T>
class Tanh final : public Module<T> {
 public:
  using Map = BasicFeatureMap<T>;
  Map forward(const Map& x) override;
  Map backward(const Map& grad_out) override;
  std::size_t cache_depth() const override { return cache_.size(); }
  void clear_cache() override { cache_.clear(); }

 private:
  CacheStack<Map> cache_;  // output
};

// Per-channel normalization over the spatial extent, no affine parameters.
template <typename T>
class InstanceNorm final : public Module<T> {
 public:
  using Map = BasicFeatureMap<T>;
  explicit InstanceNorm(int channels, T eps = T(1e-5)) : channels_(channels), eps_(eps) {}
  Map forward(const Map& x) override;
  Map backward(const Map& grad_out) override;
  std::size_t cache_depth() const override { return cache_.size(); }
  void clear_cache() override { cache_.clear(); }

 private:
  struct State {
    Map normalized;
    std::vector<T> inv_std;
  };
  int channels_;
  T eps_;
  CacheStack<State> cache_;
};

// Nearest-neighbor 2x duplication.
template <typename T>
class Upsample2x final : public Module<T> {
 public:
  using Map = BasicFeatureMap<T>;
  Map forward(const Map& x) override;
  Map backward(const Map& grad_out) override;
  std::size_t cache_depth() const override { return cache_.size(); }
  void clear_cache() override { cache_.clear(); }

 private:
  CacheStack<int> cache_;  // only marks that a forward happened
};

template <typename T>
class Sequential final : public Module<T> {
 public:
  using Map = BasicFeatureMap<T>;

  Sequential() = default;

  template <typename M>
  M& add(std::unique_ptr<M> m) {
    M& ref = *m;
    layers_.push_back(std::move(m));
    return ref;
  }
  template <typename M, typename... Args>
  M& emplace(Args&&... args) {
    return add(std::make_unique<M>(std::forward<Args>(args)...));
  }

  Map forward(const Map& x) override;
  Map backward(const Map& grad_out) override;
  void collect_params(std::vector<Param<T>*>& out) override;
  std::size_t cache_depth() const override;
  void clear_cache() override;

  std::size_t size() const { return layers_.size(); }
  Module<T>& layer(std::size_t i) { return *layers_[i]; }

 private:
  std::vector<ModulePtr<T>> layers_;
};

// x + conv-norm-relu-conv-norm(x). Channel count is preserved. Without
// normalization the convolutions carry biases instead.
template <typename T>
class ResnetBlock final : public Module<T> {
 public:
  using Map = BasicFeatureMap<T>;

  explicit ResnetBlock(int channels, bool normalize = true);

  Map forward(const Map& x) override;
  Map backward(const Map& grad_out) override;
  void collect_params(std::vector<Param<T>*>& out) override { branch_.collect_params(out); }
  std::size_t cache_depth() const override { return branch_.cache_depth(); }
  void clear_cache() override { branch_.clear_cache(); }

  int channels() const { return channels_; }
  bool normalized() const { return normalize_; }
  Conv2d<T>& first_conv() { return *first_; }
  Conv2d<T>& second_conv() { return *second_; }
  void init_he(Rng& rng);

 private:
  int channels_;
  bool normalize_;
  Sequential<T> branch_;
  Conv2d<T>* first_ = nullptr;
  Conv2d<T>* second_ = nullptr;
};

// Output spatial size of a convolution; throws when non-positive.
int conv_output_size(int in, int kernel, int stride, int padding);

// Stateless convolution: weight shape (out, in, k, k), optional bias of size out.
template <typename T>
BasicFeatureMap<T> conv2d(const BasicFeatureMap<T>& input, const Param<T>& weight, const Param<T>* bias,
                          int stride, int padding);

// Stride-2, 3x3 convolution halving even spatial sizes.
template <typename T>
std::unique_ptr<Conv2d<T>> make_downsample_conv(int in_channels, int out_channels, bool bias = true) {
  return std::make_unique<Conv2d<T>>(ConvSpec{in_channels, out_channels, 3, 2, 1, bias});
}

// Nearest 2x upsample followed by a 3x3 convolution.
template <typename T>
std::unique_ptr<Sequential<T>> make_upsample_conv(int in_channels, int out_channels, bool bias = true) {
  auto s = std::make_unique<Sequential<T>>();
  s->template emplace<Upsample2x<T>>();
  s->template emplace<Conv2d<T>>(ConvSpec{in_channels, out_channels, 3, 1, 1, bias});
  return s;
}

// Re-initializes every parameter with N(0, stddev); used by tests to move away
// from structured (zero) initializations.
template <typename T>
void randomize_parameters(Module<T>& m, Rng& rng, double stddev) {
  for (auto* p : m.parameters()) {
    for (auto& v : p->value) v = static_cast<T>(rng.normal(0.0, stddev));
  }
}

template <typename T>
std::size_t parameter_count(Module<T>& m) {
  std::size_t n = 0;
  for (auto* p : m.parameters()) n += p->size();
  return n;
}

extern template class Conv2d<float>;
extern template class Conv2d<double>;
extern template class Relu<float>;
extern template class Relu<double>;
extern template class LeakyRelu<float>;
extern template class LeakyRelu<double>;
extern template class Tanh<float>;
extern template class Tanh<double>;
extern template class InstanceNorm<float>;
extern template class InstanceNorm<double>;
extern template class Upsample2x<float>;
extern template class Upsample2x<double>;
extern template class Sequential<float>;
extern template class Sequential<double>;
extern template class ResnetBlock<float>;
extern template class ResnetBlock<double>;

}  // namespace dwnet::nn
