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

#include <Eigen/Core>
#include <vector>

#include "dwnet/losses.hpp"
#include "dwnet/video.hpp"

namespace dwnet {

// n x d embedding vectors, one sample per row.
using EmbeddingSet = Eigen::MatrixXd;

// Per frame, K keypoints in pixels.
using KeypointTrack = std::vector<std::vector<Keypoint>>;

// Unbiased (n - 1) sample covariance of the rows.
Eigen::MatrixXd sample_covariance(const EmbeddingSet& x);

// Tr((A B)^(1/2)) for symmetric positive semidefinite A and B, evaluated as
// Tr((A^(1/2) B A^(1/2))^(1/2)) through symmetric eigendecompositions.
// Eigenvalues below 1e-12 of the largest are treated as zero. Throws
// ValidationError when either matrix is asymmetric beyond 1e-8 and
// NumericError, quoting the residual norm, when a square root cannot be
// formed.
double matrix_sqrt_product(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b);

// Frechet distance between Gaussian fits of two embedding sets:
// |mu_a - mu_b|^2 + Tr(C_a + C_b - 2 (C_a C_b)^(1/2)), clamped at 0.
// Requires equal d, n >= 2 per set and finite values.
double frechet_distance(const EmbeddingSet& a, const EmbeddingSet& b);

// Mean Euclidean distance over (frame, keypoint) pairs visible in both
// tracks. Throws ShapeError on misaligned tracks and ValidationError when no
// pair is visible.
double akd(const KeypointTrack& predicted, const KeypointTrack& ground_truth);

// L1 feature distance under one fixed extractor; the same computation as the
// reconstruction loss.
template <typename T>
double perceptual_distance(FeatureExtractor<T>& extractor, const BasicFeatureMap<T>& a, const BasicFeatureMap<T>& b) {
  FeatureExtractor<T>* list[] = {&extractor};
  return reconstruction_loss<T>(std::span<FeatureExtractor<T>* const>(list), a, b);
}

}  // namespace dwnet
