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
#include "dwnet/optim.hpp"

#include <cmath>
#include <string>

namespace dwnet::nn {

template <typename T>
Optimizer<T>::Optimizer(std::vector<Param<T>*> params, OptimizerConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto* p : params_) {
    m_.emplace_back(p->size(), 0.0);
    v_.emplace_back(p->size(), 0.0);
  }
}

template <typename T>
void Optimizer<T>::step(double lr) {
  for (const auto* p : params_) {
    for (T g : p->grad) {
      if (!std::isfinite(g)) throw NumericError("optimizer step aborted: non-finite gradient in '" + p->name + "'");
    }
  }
  ++steps_;
  if (config_.plain_gradient) {
    for (auto* p : params_) {
      for (std::size_t i = 0; i < p->size(); ++i) p->value[i] -= static_cast<T>(lr * p->grad[i]);
    }
    return;
  }
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(steps_));
  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto* p = params_[k];
    auto& m = m_[k];
    auto& v = v_[k];
    for (std::size_t i = 0; i < p->size(); ++i) {
      const double g = p->grad[i];
      m[i] = config_.beta1 * m[i] + (1.0 - config_.beta1) * g;
      v[i] = config_.beta2 * v[i] + (1.0 - config_.beta2) * g * g;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      p->value[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + config_.eps));
    }
  }
}

template <typename T>
void Optimizer<T>::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

double LinearDecay::at(std::int64_t step) const {
  if (total_ <= 0) return initial_;
  const double frac = static_cast<double>(step) / static_cast<double>(total_);
  return initial_ * std::max(0.0, 1.0 - frac);
}

template class Optimizer<float>;
template class Optimizer<double>;

}  // namespace dwnet::nn
