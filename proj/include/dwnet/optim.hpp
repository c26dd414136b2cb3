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

namespace dwnet::nn {

struct OptimizerConfig {
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Plain gradient descent (value -= lr * grad) instead of Adam moments.
  bool plain_gradient = false;
};

// Adam over a fixed parameter list. Gradients are read but never cleared;
// callers reset them explicitly with zero_grad().
template <typename T>
class Optimizer {
 public:
  Optimizer(std::vector<Param<T>*> params, OptimizerConfig config = {});

  // Throws NumericError, leaving every parameter untouched, if any gradient
  // is non-finite.
  void step(double lr);
  void zero_grad();

  std::int64_t steps_taken() const { return steps_; }
  const OptimizerConfig& config() const { return config_; }

 private:
  std::vector<Param<T>*> params_;
  OptimizerConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::int64_t steps_ = 0;
};

// Learning rate decayed linearly from `initial` at step 0 to zero at `total`.
class LinearDecay {
 public:
  LinearDecay(double initial, std::int64_t total) : initial_(initial), total_(total) {}
  double at(std::int64_t step) const;

 private:
  double initial_;
  std::int64_t total_;
};

extern template class Optimizer<float>;
extern template class Optimizer<double>;

}  // namespace dwnet::nn
