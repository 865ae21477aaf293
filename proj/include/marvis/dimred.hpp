/*
 * Copyright 2026 The marvis Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "marvis/data.hpp"

namespace marvis {

struct TsneParams {
  double perplexity = 15.0;
  int iterations = 1000;
  double learning_rate = 200.0;
  double early_exaggeration = 12.0;
  int early_exaggeration_iters = 250;
  double momentum = 0.5;        // during early exaggeration
  double final_momentum = 0.8;  // afterwards
  std::uint64_t seed = 0;
  double min_prob = 1e-12;
  int kl_every = 50;

  void validate() const;
};

// Symmetric joint affinities plus the per-row conditionals they were built
// from. Both matrices are n x n, row-major.
struct AffinityMatrix {
  std::size_t n = 0;
  std::vector<double> p;
  std::vector<double> conditional;
  std::vector<double> row_sigmas;
  double target_perplexity = 0.0;

  double operator()(std::size_t i, std::size_t j) const { return p[i * n + j]; }
};

// 2^H of row i of the conditional matrix, H in bits.
double realized_perplexity(const AffinityMatrix& a, std::size_t i);

AffinityMatrix pairwise_affinities(const EmbeddingMatrix& x, double perplexity,
                                   double min_prob = 1e-12);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point2&) const = default;
};

struct PointRole {
  Split split = Split::kTrain;
  std::optional<double> label;  // class index or regression target (train rows)
  bool operator==(const PointRole&) const = default;
};

struct KlRecord {
  int iteration = 0;
  double kl = 0.0;
  bool operator==(const KlRecord&) const = default;
};

struct Layout2D {
  std::vector<Point2> coords;
  std::vector<PointRole> roles;
  std::vector<KlRecord> kl_trace;
  std::uint64_t seed = 0;

  std::size_t size() const { return coords.size(); }
  std::string to_json() const;
};

// KL(P || Q) over off-diagonal pairs for a Student-t (1 dof) embedding.
double tsne_kl(const AffinityMatrix& a, std::span<const Point2> y);

// Analytic gradient of tsne_kl with respect to each coordinate,
// laid out as [dx0, dy0, dx1, dy1, ...].
std::vector<double> tsne_gradient(const AffinityMatrix& a, std::span<const Point2> y);

// Exact O(n^2) t-SNE. Cosine-hinted inputs are L2-normalized first. All
// roles are tagged as unlabeled train points.
Layout2D tsne_fit(const EmbeddingMatrix& x, const TsneParams& params);

// Joint fit of train and query rows; the first train.rows() coordinates
// belong to the train rows. `train_labels` (optional) annotates the roles.
Layout2D joint_layout(const EmbeddingMatrix& train, const EmbeddingMatrix& query,
                      const TsneParams& params,
                      std::span<const std::optional<double>> train_labels = {});
Layout2D joint_layout(const EmbeddingMatrix& train, const TsneParams& params,
                      std::span<const std::optional<double>> train_labels = {});

struct PcaProjection {
  std::size_t rows = 0;
  std::size_t dims = 0;
  std::vector<double> coords;       // rows x dims
  std::vector<double> components;   // dims x d, unit rows
  std::vector<double> mean;         // d
  std::vector<double> eigenvalues;  // all d eigenvalues, descending (population covariance)

  double at(std::size_t i, std::size_t k) const { return coords[i * dims + k]; }
};

// Mean-centered projection on the top `dims` principal components. Each
// component is signed so its largest-magnitude loading is positive.
PcaProjection pca_project(const EmbeddingMatrix& x, std::size_t dims);

}  // namespace marvis
