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
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace marvis {

enum class TaskKind { kClassification, kRegression };
enum class Split { kTrain, kQuery };
enum class Metric { kEuclidean, kCosine };

std::string to_string(TaskKind kind);
std::string to_string(Split split);
std::string to_string(Metric metric);
TaskKind parse_task_kind(const std::string& s);
Metric parse_metric(const std::string& s);

// A label is a class index for classification datasets and a numeric target
// for regression datasets. Query samples may carry a label as ground truth.
struct SampleRecord {
  std::string id;
  std::optional<double> label;
  Split split = Split::kTrain;

  int class_index() const;
};

struct DatasetMetadata {
  std::string description;
  std::map<std::string, std::string> features;
  std::map<std::string, std::string> classes;

  bool empty() const {
    return description.empty() && features.empty() && classes.empty();
  }
  bool operator==(const DatasetMetadata&) const = default;
};

struct Dataset {
  std::string name;
  TaskKind task = TaskKind::kClassification;
  std::vector<SampleRecord> samples;
  std::vector<std::string> class_names;
  DatasetMetadata metadata;

  // Throws Error(kValidation) when an invariant is violated.
  void validate() const;

  std::vector<std::size_t> indices(Split split) const;
  std::size_t num_classes() const { return class_names.size(); }
};

// Dense row-major matrix of sample embeddings. Immutable once constructed.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix() = default;
  EmbeddingMatrix(std::size_t rows, std::size_t cols, std::vector<double> values,
                  std::vector<std::string> sample_ids,
                  Metric metric_hint = Metric::kEuclidean);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  Metric metric_hint() const { return metric_hint_; }
  const std::vector<std::string>& sample_ids() const { return sample_ids_; }
  const std::vector<double>& values() const { return values_; }

  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * cols_, cols_};
  }
  double at(std::size_t i, std::size_t j) const { return values_[i * cols_ + j]; }

  EmbeddingMatrix select_rows(std::span<const std::size_t> indices) const;

  // Row-wise L2 normalization. Throws on zero rows.
  EmbeddingMatrix normalized() const;

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> values_;
  std::vector<std::string> sample_ids_;
  Metric metric_hint_ = Metric::kEuclidean;
};

struct LoadedDataset {
  Dataset dataset;
  EmbeddingMatrix embeddings;
};

// Reads a JSON manifest and its float32 little-endian row-major payload.
LoadedDataset load_dataset(const std::filesystem::path& manifest_path);

// Writes the manifest and payload. `embedding_file` is stored relative to the
// manifest directory; by default "<manifest stem>.f32".
void save_dataset(const std::filesystem::path& manifest_path, const Dataset& ds,
                  const EmbeddingMatrix& emb,
                  std::optional<std::string> embedding_file = std::nullopt);

// Deterministic split assignment. Classification splits are stratified per
// class with round(fraction * class size) query samples; samples without a
// label are always placed in the query split.
Dataset split_dataset(const Dataset& ds, double query_fraction, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Tabular featurizer.

enum class ColumnType { kNumeric, kCategorical, kId, kLabel, kTarget, kSplit };

ColumnType parse_column_type(const std::string& s);

struct Table {
  std::vector<std::string> column_names;
  std::vector<ColumnType> column_types;
  // rows x columns; std::nullopt marks a missing cell.
  std::vector<std::vector<std::optional<std::string>>> cells;

  std::size_t num_rows() const { return cells.size(); }
  std::size_t num_columns() const { return column_names.size(); }
};

// CSV with a header row and a "#types:" line listing one type per column
// (numeric, categorical, id, label, target or split). Empty cells and the
// tokens NA, N/A, ?, nan are read as missing.
Table read_csv_table(const std::filesystem::path& path);

// Numeric columns are standardized with population variance, constant
// columns become zeros and missing numeric cells take the column median.
// Categorical columns are one-hot encoded; a missing value is its own
// category. Statistics and categories come from the rows flagged in
// `fit_rows` (all rows when empty); unseen categories encode as all zeros.
struct TabularFeaturizerConfig {
  std::vector<bool> fit_rows;
};

EmbeddingMatrix featurize_tabular(const Table& table,
                                  const TabularFeaturizerConfig& cfg = {});

// Builds a dataset from a typed table: labels from the label/target column,
// ids from the id column (row index otherwise), splits from the split column
// or from split_dataset(query_fraction, seed). The featurizer is fit on the
// train rows only.
LoadedDataset build_tabular_dataset(const Table& table, const std::string& name,
                                    double query_fraction, std::uint64_t seed);

}  // namespace marvis
