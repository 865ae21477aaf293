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

#include "marvis/knn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json.hpp"
#include "marvis/error.hpp"

namespace marvis {

std::size_t default_k(std::size_t n_train) {
  const std::size_t tenth = (n_train + 9) / 10;
  return std::max<std::size_t>(1, std::min<std::size_t>(30, tenth));
}

double embedding_distance(std::span<const double> a, std::span<const double> b,
                          Metric metric) {
  if (a.size() != b.size()) {
    fail(ErrorCode::kInvalidArgument, "dimension mismatch: " + std::to_string(a.size()) +
                                          " vs " + std::to_string(b.size()));
  }
  if (metric == Metric::kEuclidean) {
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) {
      const double diff = a[k] - b[k];
      s += diff * diff;
    }
    return std::sqrt(s);
  }
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    dot += a[k] * b[k];
    na += a[k] * a[k];
    nb += b[k] * b[k];
  }
  if (na == 0.0 || nb == 0.0) {
    fail(ErrorCode::kInvalidArgument, "zero-norm vector under the cosine metric");
  }
  // Clamp rounding noise so parallel vectors sit at exactly zero distance.
  return std::max(0.0, 1.0 - dot / (std::sqrt(na) * std::sqrt(nb)));
}

void assign_weights(NeighborSet& ns, TaskKind task) {
  ns.weights.resize(ns.neighbors.size());
  double total = 0.0;
  for (std::size_t i = 0; i < ns.neighbors.size(); ++i) {
    ns.weights[i] = 1.0 / (ns.neighbors[i].distance + kWeightEpsilon);
    total += ns.weights[i];
  }
  for (auto& w : ns.weights) w /= total;

  ns.per_class_stats.clear();
  if (task != TaskKind::kClassification) return;
  for (const auto& nb : ns.neighbors) {
    if (!nb.label) continue;
    auto& st = ns.per_class_stats[static_cast<int>(*nb.label)];
    ++st.count;
    st.mean_distance += nb.distance;
  }
  for (auto& [cls, st] : ns.per_class_stats) {
    st.mean_distance /= static_cast<double>(st.count);
  }
}

NeighborSet knn_query(const EmbeddingMatrix& train,
                      std::span<const std::optional<double>> labels,
                      std::span<const double> q, const KnnParams& params, TaskKind task,
                      std::string query_id) {
  if (q.size() != train.cols()) {
    fail(ErrorCode::kInvalidArgument, "dimension mismatch: query d=" +
                                          std::to_string(q.size()) + ", train d=" +
                                          std::to_string(train.cols()));
  }
  if (params.k < 1 || params.k > train.rows()) {
    fail(ErrorCode::kInvalidArgument, "k must lie in [1, " + std::to_string(train.rows()) +
                                          "], got " + std::to_string(params.k));
  }
  if (!labels.empty() && labels.size() != train.rows()) {
    fail(ErrorCode::kInvalidArgument, "label count does not match train rows");
  }
  std::vector<std::pair<double, std::size_t>> all(train.rows());
  for (std::size_t i = 0; i < train.rows(); ++i) {
    all[i] = {embedding_distance(q, train.row(i), params.metric), i};
  }
  const auto kth = all.begin() + static_cast<std::ptrdiff_t>(params.k);
  std::partial_sort(all.begin(), kth, all.end());

  NeighborSet ns;
  ns.query_id = std::move(query_id);
  ns.neighbors.reserve(params.k);
  for (auto it = all.begin(); it != kth; ++it) {
    Neighbor nb;
    nb.distance = it->first;
    nb.row = it->second;
    if (!labels.empty()) nb.label = labels[nb.row];
    ns.neighbors.push_back(nb);
  }
  assign_weights(ns, task);
  return ns;
}

KnnPrediction knn_predict(const NeighborSet& ns, TaskKind task) {
  if (ns.empty()) fail(ErrorCode::kInvalidArgument, "empty neighbor set");
  if (ns.weights.size() != ns.neighbors.size()) {
    fail(ErrorCode::kInvalidArgument, "neighbor set has no weights");
  }
  for (const auto& nb : ns.neighbors) {
    if (!nb.label) fail(ErrorCode::kInvalidArgument, "neighbor without a label");
  }
  KnnPrediction out;
  if (task == TaskKind::kRegression) {
    double v = 0.0;
    for (std::size_t i = 0; i < ns.size(); ++i) v += ns.weights[i] * *ns.neighbors[i].label;
    out.value = v;
    out.confidence = 1.0;
    return out;
  }
  std::map<int, double> votes;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    votes[static_cast<int>(*ns.neighbors[i].label)] += ns.weights[i];
  }
  int best = votes.begin()->first;
  double best_weight = votes.begin()->second;
  double total = 0.0;
  for (const auto& [cls, w] : votes) {
    total += w;
    if (w > best_weight) {
      best = cls;
      best_weight = w;
    }
  }
  out.value = best;
  out.confidence = best_weight / total;
  return out;
}

std::string NeighborSet::to_json() const {
  nlohmann::json j;
  j["query_id"] = query_id;
  j["neighbors"] = nlohmann::json::array();
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    nlohmann::json nb = {{"row", neighbors[i].row},
                         {"distance", neighbors[i].distance},
                         {"weight", i < weights.size() ? weights[i] : 0.0}};
    nb["label"] = neighbors[i].label ? nlohmann::json(*neighbors[i].label) : nlohmann::json();
    j["neighbors"].push_back(std::move(nb));
  }
  j["per_class_stats"] = nlohmann::json::object();
  for (const auto& [cls, st] : per_class_stats) {
    j["per_class_stats"][std::to_string(cls)] = {{"count", st.count},
                                                 {"mean_distance", st.mean_distance}};
  }
  return j.dump();
}

}  // namespace marvis
