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

// Independent reference computations shared by the unit tests and the
// acceptance runner.

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "dwnet/correspondence.hpp"
#include "dwnet/iuv.hpp"
#include "dwnet/rng.hpp"
#include "dwnet/warp.hpp"

namespace dwnet::testing {

// Random dense pose. U sits on a coarse lattice so that exact ties occur.
inline IuvMap random_lattice_iuv(int h, int w, int n_parts, double fg_fraction, Rng& rng) {
  IuvMap m(h, w);
  for (std::size_t i = 0; i < m.size(); ++i) {
    if (rng.uniform() >= fg_fraction) continue;
    m.part[i] = static_cast<std::int32_t>(rng.uniform_int(1, n_parts));
    m.u[i] = static_cast<float>(rng.uniform_int(0, 20)) / 20.f;
    m.v[i] = static_cast<float>(rng.uniform());
  }
  return m;
}

// Exhaustive scan in raster order, keeping the first strictly closer pixel.
inline CorrespondenceResult brute_force_warp(const IuvMap& src, const IuvMap& drv) {
  CorrespondenceResult r{identity_grid<float>(drv.height, drv.width), std::vector<std::uint8_t>(drv.size(), 0),
                         std::vector<float>(drv.size(), 0.f)};
  for (int y = 0; y < drv.height; ++y)
    for (int x = 0; x < drv.width; ++x) {
      const std::size_t d = drv.index(y, x);
      if (drv.part[d] <= 0) continue;
      double best = INFINITY;
      int bx = -1, by = -1;
      for (int sy = 0; sy < src.height; ++sy)
        for (int sx = 0; sx < src.width; ++sx) {
          const std::size_t s = src.index(sy, sx);
          if (src.part[s] != drv.part[d]) continue;
          const double du = double(src.u[s]) - double(drv.u[d]);
          const double dv = double(src.v[s]) - double(drv.v[d]);
          const double d2 = du * du + dv * dv;
          if (d2 < best) {
            best = d2;
            bx = sx;
            by = sy;
          }
        }
      if (bx < 0) continue;
      r.matched[d] = 1;
      r.grid.x(y, x) = static_cast<float>(to_normalized(bx, src.width));
      r.grid.y(y, x) = static_cast<float>(to_normalized(by, src.height));
      r.match_distance[d] = static_cast<float>(std::sqrt(best));
    }
  return r;
}

// Symmetric positive definite matrix with eigenvalues uniform in [lo, hi].
inline Eigen::MatrixXd random_spd(int d, Rng& rng, double lo = 0.5, double hi = 2.0) {
  Eigen::MatrixXd g(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) g(i, j) = rng.normal();
  const Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  const Eigen::MatrixXd q = qr.householderQ();
  Eigen::VectorXd ev(d);
  for (int i = 0; i < d; ++i) ev(i) = rng.uniform(lo, hi);
  const Eigen::MatrixXd m = q * ev.asDiagonal() * q.transpose();
  return 0.5 * (m + m.transpose());
}

// Tr((A B)^1/2) by the coupled Newton-Schulz iteration on the normalized
// product, 50 iterations in double.
inline double newton_schulz_trace_sqrt(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  const Eigen::MatrixXd m = a * b;
  const int d = static_cast<int>(m.rows());
  const double norm = m.norm();
  const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(d, d);
  Eigen::MatrixXd y = m / norm;
  Eigen::MatrixXd z = id;
  for (int k = 0; k < 50; ++k) {
    const Eigen::MatrixXd t = 0.5 * (3.0 * id - z * y);
    y = y * t;
    z = t * z;
  }
  return y.trace() * std::sqrt(norm);
}

// Sample set whose centered columns are orthogonal: dimension k is spread
// over its own pair of rows, so the sample covariance is exactly diagonal.
// Returns the means and variances through the out-parameters.
inline Eigen::MatrixXd orthogonal_design(int d, Rng& rng, Eigen::VectorXd& mean, Eigen::VectorXd& var) {
  Eigen::MatrixXd x(2 * d, d);
  mean.resize(d);
  var.resize(d);
  for (int k = 0; k < d; ++k) {
    mean(k) = rng.normal();
    const double s = rng.uniform(0.2, 3.0);
    for (int r = 0; r < 2 * d; ++r) x(r, k) = mean(k);
    x(2 * k, k) += s;
    x(2 * k + 1, k) -= s;
    var(k) = 2 * s * s / (2 * d - 1);
  }
  return x;
}

// Frechet distance between Gaussians with diagonal covariances.
inline double diagonal_frechet(const Eigen::VectorXd& ma, const Eigen::VectorXd& va, const Eigen::VectorXd& mb,
                               const Eigen::VectorXd& vb) {
  double out = 0;
  for (Eigen::Index k = 0; k < ma.size(); ++k) {
    out += std::pow(ma(k) - mb(k), 2) + std::pow(std::sqrt(va(k)) - std::sqrt(vb(k)), 2);
  }
  return out;
}

}  // namespace dwnet::testing
