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
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "marvis/data.hpp"
#include "marvis/dimred.hpp"
#include "marvis/knn.hpp"
#include "marvis/parser.hpp"
#include "marvis/viz.hpp"
#include "marvis/vlm.hpp"

namespace marvis {

// ---------------------------------------------------------------------------
// Metrics

struct ClassificationMetrics {
  double accuracy = 0.0;
  double balanced_accuracy = 0.0;
  double macro_f1 = 0.0;
};

// Predictions outside [0, n_classes) (e.g. -1 for unparseable answers) count
// as wrong. Balanced accuracy averages recall over classes present in
// `truth`; macro-F1 averages over classes present in truth or predictions.
ClassificationMetrics classification_metrics(std::span<const int> truth,
                                             std::span<const int> pred, std::size_t n_classes);

struct RegressionMetrics {
  std::optional<double> r2;      // max(0, R^2); empty when truth is constant
  std::optional<double> r2_raw;  // unfloored
  double mae = 0.0;
  double rmse = 0.0;
};

RegressionMetrics regression_metrics(std::span<const double> truth, std::span<const double> pred);

// Normal-approximation half-width of a 95% interval for a proportion.
double ci95(double p, std::size_t n);

// ---------------------------------------------------------------------------
// Reasoning-trace statistics

struct ReasoningGroupStats {
  std::size_t responses = 0;
  double mean_chars = 0.0;
  double mean_words = 0.0;
  double mean_color_mentions = 0.0;
  double distance_rate = 0.0;  // "distance"/"distances" per response
  double closest_rate = 0.0;
  double majority_rate = 0.0;
  double cluster_rate = 0.0;
};

struct ReasoningStats {
  ReasoningGroupStats overall;
  ReasoningGroupStats correct;
  ReasoningGroupStats incorrect;

  std::string to_json() const;
};

struct ReasoningRecord {
  std::string text;
  bool correct = false;
};

// Case-insensitive, word-bounded occurrences of `term` in `text`.
std::size_t count_term(std::string_view text, std::string_view term);

// Color mentions count the names in `palette` (the class palette when empty).
ReasoningStats analyze_reasoning(std::span<const ReasoningRecord> records,
                                 std::span<const std::string> palette = {});

// ---------------------------------------------------------------------------
// Pipeline

enum class LayoutStrategy { kShared, kPerQuery };

std::string to_string(LayoutStrategy s);
LayoutStrategy parse_layout_strategy(const std::string& s);

struct PipelineConfig {
  PromptMode mode = PromptMode::kTsneKnn;
  TsneParams tsne;
  std::optional<std::size_t> k;          // default_k(n_train) when empty
  std::optional<Metric> knn_metric;      // embedding metric hint when empty
  double zoom_scale = kDefaultZoomScale;
  double margin_fraction = 0.10;
  RenderOptions render;
  LayoutStrategy layout = LayoutStrategy::kShared;
  std::size_t max_layout_points = 2000;  // train rows kept in a layout
  PromptOptions prompt;
  bool include_metadata = true;
  bool analyze_reasoning = false;
  std::optional<std::filesystem::path> artifact_dir;

  void validate() const;
};

// Everything shared across the queries of one run: the KNN results on the
// raw embeddings, the color map, and (for the shared strategy) the layout.
struct PreparedRun {
  const LoadedDataset* data = nullptr;
  PipelineConfig config;
  std::vector<std::size_t> train_rows;  // dataset rows of the train split
  std::vector<std::size_t> query_rows;  // dataset rows of the query split
  EmbeddingMatrix train_embeddings;
  std::vector<std::optional<double>> train_labels;
  KnnParams knn;
  std::vector<NeighborSet> neighbors;   // one per query
  std::optional<ColorMap> cmap;         // classification only
  std::vector<std::size_t> layout_train;  // train-split positions placed in layouts
  double effective_perplexity = 0.0;
  std::optional<Layout2D> shared_layout;
  double train_target_mean = 0.0;
};

PreparedRun prepare_run(const LoadedDataset& data, const PipelineConfig& config);

struct QueryVisual {
  Layout2D layout;  // copy of the relevant layout
  std::size_t query_index = 0;
  std::vector<std::size_t> neighbor_indices;  // layout rows
  RenderResult render;
};

QueryVisual visualize_query(const PreparedRun& run, std::size_t q);

PromptBundle prompt_for_query(const PreparedRun& run, std::size_t q, const QueryVisual& vis);

struct QueryRecord {
  std::string id;
  std::optional<double> truth;
  std::optional<double> prediction;  // class index or value; empty when failed
  std::string channel;               // parser channel, "unparseable" or "failed"
  bool parsed = false;
  bool failed = false;
  std::string error;
  double latency_seconds = 0.0;
  int retries = 0;
  std::string raw_text;
  double knn_prediction = 0.0;
  double knn_confidence = 0.0;
};

struct EvalReport {
  std::string dataset;
  TaskKind task = TaskKind::kClassification;
  PromptMode mode = PromptMode::kTsneKnn;
  std::size_t k = 0;
  double effective_perplexity = 0.0;
  std::size_t n_queries = 0;
  std::size_t n_completed = 0;
  std::size_t n_failed = 0;
  std::size_t n_unparseable = 0;
  std::size_t n_scored = 0;
  std::string unparseable_policy;
  bool complete = true;
  std::optional<ClassificationMetrics> classification;
  std::optional<RegressionMetrics> regression;
  std::optional<double> ci95;
  std::optional<ReasoningStats> reasoning;
  std::vector<QueryRecord> records;

  std::string to_json() const;
  std::string to_table() const;
};

// Runs layout, KNN, render, prompt, query and parse for every query sample.
// Transport failures are recorded per query and mark the report incomplete.
EvalReport run_evaluation(const LoadedDataset& data, const PipelineConfig& config,
                          VlmBackend& backend);

// Writes <out_dir>/<query id>.png and .json sidecars for every query plus
// layout.json (shared strategy). Returns the number of images written.
std::size_t write_visualizations(const LoadedDataset& data, const PipelineConfig& config,
                                 const std::filesystem::path& out_dir);

}  // namespace marvis
