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

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "files.hpp"
#include "marvis/data.hpp"
#include "marvis/dimred.hpp"
#include "marvis/random.hpp"

namespace marvis::testing {

inline std::vector<std::string> row_ids(std::size_t n, const std::string& prefix = "r") {
  std::vector<std::string> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = prefix + std::to_string(i);
  return ids;
}

inline EmbeddingMatrix random_matrix(Rng& rng, std::size_t n, std::size_t d,
                                     Metric metric = Metric::kEuclidean) {
  std::vector<double> v(n * d);
  for (auto& x : v) x = rng.normal();
  return EmbeddingMatrix(n, d, std::move(v), row_ids(n), metric);
}

// Isotropic Gaussian blobs with class centers `separation` apart along
// distinct axes. Train rows come first within each class.
inline LoadedDataset make_blobs(std::size_t n_classes, std::size_t train_per,
                                std::size_t query_per, std::size_t d, double separation,
                                std::uint64_t seed) {
  Rng rng(seed);
  LoadedDataset out;
  out.dataset.name = "blobs";
  out.dataset.task = TaskKind::kClassification;
  std::vector<double> values;
  std::vector<std::string> ids;
  for (std::size_t c = 0; c < n_classes; ++c) {
    out.dataset.class_names.push_back("class_" + std::to_string(c));
    for (std::size_t i = 0; i < train_per + query_per; ++i) {
      SampleRecord s;
      s.id = "c" + std::to_string(c) + "_" + std::to_string(i);
      s.label = static_cast<double>(c);
      s.split = i < train_per ? Split::kTrain : Split::kQuery;
      for (std::size_t j = 0; j < d; ++j) {
        const double center = (j == c % d) ? separation : 0.0;
        values.push_back(center + rng.normal());
      }
      ids.push_back(s.id);
      out.dataset.samples.push_back(std::move(s));
    }
  }
  const std::size_t n = ids.size();
  out.embeddings = EmbeddingMatrix(n, d, std::move(values), std::move(ids));
  return out;
}

// Regression counterpart: target = sum of coordinates plus noise.
inline LoadedDataset make_regression(std::size_t n_train, std::size_t n_query, std::size_t d,
                                     std::uint64_t seed) {
  Rng rng(seed);
  LoadedDataset out;
  out.dataset.name = "linear";
  out.dataset.task = TaskKind::kRegression;
  std::vector<double> values;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n_train + n_query; ++i) {
    double t = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double x = 2.0 * rng.normal();
      values.push_back(x);
      t += x;
    }
    SampleRecord s;
    s.id = "s" + std::to_string(i);
    s.label = t + 0.1 * rng.normal();
    s.split = i < n_train ? Split::kTrain : Split::kQuery;
    ids.push_back(s.id);
    out.dataset.samples.push_back(std::move(s));
  }
  const std::size_t n = ids.size();
  out.embeddings = EmbeddingMatrix(n, d, std::move(values), std::move(ids));
  return out;
}

// Straightforward reference KNN: every distance, a full sort on
// (distance, row), inverse-distance votes.
struct OracleNeighbor {
  double distance;
  std::size_t row;
};

inline double oracle_distance(const double* a, const double* b, std::size_t d, bool cosine) {
  if (!cosine) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) s += (a[j] - b[j]) * (a[j] - b[j]);
    return std::sqrt(s);
  }
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    ab += a[j] * b[j];
    aa += a[j] * a[j];
    bb += b[j] * b[j];
  }
  return 1.0 - ab / (std::sqrt(aa) * std::sqrt(bb));
}

inline std::vector<OracleNeighbor> oracle_knn(const std::vector<double>& train, std::size_t n,
                                              std::size_t d, const double* q, std::size_t k,
                                              bool cosine) {
  std::vector<OracleNeighbor> all;
  for (std::size_t i = 0; i < n; ++i) {
    all.push_back({oracle_distance(&train[i * d], q, d, cosine), i});
  }
  std::sort(all.begin(), all.end(), [](const OracleNeighbor& a, const OracleNeighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.row < b.row;
  });
  all.resize(k);
  return all;
}

inline int oracle_vote(const std::vector<OracleNeighbor>& nb, const std::vector<int>& labels) {
  std::map<int, double> votes;
  double total = 0.0;
  for (const auto& n : nb) total += 1.0 / (n.distance + 1e-12);
  for (const auto& n : nb) votes[labels[n.row]] += (1.0 / (n.distance + 1e-12)) / total;
  int best = -1;
  double best_w = -1.0;
  for (const auto& [c, w] : votes) {
    if (w > best_w) {
      best = c;
      best_w = w;
    }
  }
  return best;
}

// KL(P || Q) with a Student-t kernel, written from the definition.
inline double oracle_kl(const AffinityMatrix& a, const std::vector<Point2>& y) {
  const std::size_t n = a.n;
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double dx = y[i].x - y[j].x, dy = y[i].y - y[j].y;
      z += 1.0 / (1.0 + dx * dx + dy * dy);
    }
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double p = a(i, j);
      if (p <= 0.0) continue;
      const double dx = y[i].x - y[j].x, dy = y[i].y - y[j].y;
      const double q = 1.0 / (1.0 + dx * dx + dy * dy) / z;
      kl += p * std::log(p / q);
    }
  }
  return kl;
}

// Entropy recomputed from the returned conditional row, in bits.
inline double oracle_perplexity(const AffinityMatrix& a, std::size_t i) {
  double h = 0.0;
  for (std::size_t j = 0; j < a.n; ++j) {
    const double p = a.conditional[i * a.n + j];
    if (p > 0.0) h -= p * std::log2(p);
  }
  return std::exp2(h);
}

}  // namespace marvis::testing
