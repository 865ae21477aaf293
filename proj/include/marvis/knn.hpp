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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "marvis/data.hpp"

namespace marvis {

// Added to every distance before inversion so exact duplicates stay finite.
inline constexpr double kWeightEpsilon = 1e-12;

struct KnnParams {
  std::size_t k = 30;
  Metric metric = Metric::kEuclidean;
};

// min(30, ceil(n_train / 10)), at least 1.
std::size_t default_k(std::size_t n_train);

struct Neighbor {
  std::size_t row = 0;  // index into the train matrix
  double distance = 0.0;
  std::optional<double> label;
};

struct ClassNeighborStats {
  std::size_t count = 0;
  double mean_distance = 0.0;
};

struct NeighborSet {
  std::string query_id;
  std::vector<Neighbor> neighbors;  // ascending distance, ties by row
  std::vector<double> weights;      // inverse-distance, sums to 1
  std::map<int, ClassNeighborStats> per_class_stats;  // classification only

  std::size_t size() const { return neighbors.size(); }
  bool empty() const { return neighbors.empty(); }
  std::string to_json() const;
};

// Euclidean distance, or 1 - cosine similarity. Zero vectors are rejected
// under the cosine metric.
double embedding_distance(std::span<const double> a, std::span<const double> b,
                          Metric metric);

// Exact k nearest train rows of `q` in the raw embedding space.
NeighborSet knn_query(const EmbeddingMatrix& train,
                      std::span<const std::optional<double>> labels,
                      std::span<const double> q, const KnnParams& params,
                      TaskKind task = TaskKind::kClassification,
                      std::string query_id = {});

// Inverse-distance weights for a neighbor set whose distances are given.
void assign_weights(NeighborSet& ns, TaskKind task);

struct KnnPrediction {
  double value = 0.0;  // class index (classification) or weighted mean
  double confidence = 0.0;

  int class_index() const { return static_cast<int>(value); }
};

// Classification: class with the largest summed weight, ties to the smaller
// index; confidence is the winning weight share. Regression: weighted mean
// of the neighbor targets with confidence 1.
KnnPrediction knn_predict(const NeighborSet& ns, TaskKind task);

}  // namespace marvis
