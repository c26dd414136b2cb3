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
#include "dwnet/metrics.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <sstream>

namespace dwnet {
namespace {

// Relative to the largest eigenvalue; round-off leaves singular directions
// around n * eps of it.
constexpr double kEigenFloor = 1e-12;
constexpr double kSymmetryTolerance = 1e-8;
constexpr double kResidualTolerance = 1e-6;

void require_symmetric(const Eigen::MatrixXd& m, const char* name) {
  if (m.rows() != m.cols()) throw ShapeError(std::string("matrix_sqrt_product: ") + name + " is not square");
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > kSymmetryTolerance) {
    std::ostringstream os;
    os << "matrix_sqrt_product: " << name << " is not symmetric (max asymmetry " << asym << ")";
    throw ValidationError(os.str());
  }
}

// Principal square root of a symmetric positive semidefinite matrix.
Eigen::MatrixXd psd_sqrt(const Eigen::MatrixXd& m, const char* what) {
  const Eigen::MatrixXd sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) {
    std::ostringstream os;
    os << "matrix_sqrt_product: eigendecomposition of " << what << " did not converge";
    throw NumericError(os.str());
  }
  Eigen::VectorXd roots = es.eigenvalues();
  const double floor = kEigenFloor * std::max(0.0, roots.maxCoeff());
  for (Eigen::Index i = 0; i < roots.size(); ++i) roots[i] = roots[i] <= floor ? 0.0 : std::sqrt(roots[i]);
  Eigen::MatrixXd root = es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
  const double scale = std::max(1.0, sym.norm());
  const double residual = (root * root - sym).norm();
  if (residual > kResidualTolerance * scale) {
    std::ostringstream os;
    os << "matrix_sqrt_product: square root of " << what << " failed, residual norm " << residual
       << " (matrix not positive semidefinite?)";
    throw NumericError(os.str());
  }
  return root;
}

void require_finite(const EmbeddingSet& x, const char* name) {
  if (!x.allFinite()) throw ValidationError(std::string("frechet_distance: non-finite values in ") + name);
}

}  // namespace

Eigen::MatrixXd sample_covariance(const EmbeddingSet& x) {
  if (x.rows() < 2) throw ValidationError("sample_covariance: need at least 2 samples");
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd centered = x.rowwise() - mean;
  return (centered.transpose() * centered) / static_cast<double>(x.rows() - 1);
}

double matrix_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  require_symmetric(a, "A");
  require_symmetric(b, "B");
  if (a.rows() != b.rows()) throw ShapeError("matrix_sqrt_product: dimension mismatch");
  if (a.rows() == 0) return 0.0;
  const Eigen::MatrixXd ra = psd_sqrt(a, "A");
  const Eigen::MatrixXd inner = ra * b * ra;
  return psd_sqrt(inner, "A^1/2 B A^1/2").trace();
}

double frechet_distance(const EmbeddingSet& a, const EmbeddingSet& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("frechet_distance: embedding dimensions differ (" + std::to_string(a.cols()) + " vs " +
                     std::to_string(b.cols()) + ")");
  }
  if (a.rows() < 2 || b.rows() < 2) throw ValidationError("frechet_distance: need at least 2 samples per set");
  require_finite(a, "first set");
  require_finite(b, "second set");
  const Eigen::VectorXd diff = (a.colwise().mean() - b.colwise().mean()).transpose();
  const Eigen::MatrixXd ca = sample_covariance(a);
  const Eigen::MatrixXd cb = sample_covariance(b);
  const double d = diff.squaredNorm() + ca.trace() + cb.trace() - 2.0 * matrix_sqrt_product(ca, cb);
  return d < 0.0 ? 0.0 : d;
}

double akd(const KeypointTrack& predicted, const KeypointTrack& ground_truth) {
  if (predicted.size() != ground_truth.size()) {
    throw ShapeError("akd: frame counts differ (" + std::to_string(predicted.size()) + " vs " +
                     std::to_string(ground_truth.size()) + ")");
  }
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t f = 0; f < predicted.size(); ++f) {
    if (predicted[f].size() != ground_truth[f].size()) {
      throw ShapeError("akd: keypoint counts differ at frame " + std::to_string(f));
    }
    for (std::size_t k = 0; k < predicted[f].size(); ++k) {
      const Keypoint& p = predicted[f][k];
      const Keypoint& g = ground_truth[f][k];
      if (!p.visible || !g.visible) continue;
      total += std::hypot(double(p.x) - double(g.x), double(p.y) - double(g.y));
      ++count;
    }
  }
  if (count == 0) throw ValidationError("akd: no keypoint is visible in both tracks");
  return total / static_cast<double>(count);
}

}  // namespace dwnet
