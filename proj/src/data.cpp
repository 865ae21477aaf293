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

#include "marvis/data.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <iterator>
#include <set>
#include <sstream>

#include "json.hpp"
#include "marvis/error.hpp"
#include "marvis/random.hpp"

namespace marvis {

using nlohmann::json;

std::string to_string(TaskKind kind) {
  return kind == TaskKind::kClassification ? "classification" : "regression";
}

std::string to_string(Split split) {
  return split == Split::kTrain ? "train" : "query";
}

std::string to_string(Metric metric) {
  return metric == Metric::kEuclidean ? "euclidean" : "cosine";
}

TaskKind parse_task_kind(const std::string& s) {
  if (s == "classification") return TaskKind::kClassification;
  if (s == "regression") return TaskKind::kRegression;
  fail(ErrorCode::kValidation, "unknown task_kind \"" + s + "\"");
}

Metric parse_metric(const std::string& s) {
  if (s == "euclidean") return Metric::kEuclidean;
  if (s == "cosine") return Metric::kCosine;
  fail(ErrorCode::kValidation, "unknown metric \"" + s + "\"");
}

static Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "query" || s == "test") return Split::kQuery;
  fail(ErrorCode::kValidation, "unknown split \"" + s + "\"");
}

int SampleRecord::class_index() const {
  if (!label) fail(ErrorCode::kValidation, "sample " + id + " has no label");
  return static_cast<int>(*label);
}

void Dataset::validate() const {
  std::set<std::string> seen;
  for (const auto& s : samples) {
    if (!seen.insert(s.id).second) {
      fail(ErrorCode::kValidation, "duplicate sample id \"" + s.id + "\"");
    }
    if (s.split == Split::kTrain && !s.label) {
      fail(ErrorCode::kValidation, "train sample \"" + s.id + "\" has no label");
    }
    if (!s.label) continue;
    const double v = *s.label;
    if (!std::isfinite(v)) {
      fail(ErrorCode::kValidation, "non-finite label for sample \"" + s.id + "\"");
    }
    if (task == TaskKind::kClassification) {
      if (v != std::floor(v) || v < 0 || v >= static_cast<double>(class_names.size())) {
        fail(ErrorCode::kValidation, "label of sample \"" + s.id +
                                         "\" is not a class index below " +
                                         std::to_string(class_names.size()));
      }
    }
  }
  if (task == TaskKind::kRegression && !class_names.empty()) {
    fail(ErrorCode::kValidation, "regression datasets must not declare class_names");
  }
  if (task == TaskKind::kClassification && class_names.empty()) {
    fail(ErrorCode::kValidation, "classification dataset without class_names");
  }
}

std::vector<std::size_t> Dataset::indices(Split split) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (samples[i].split == split) out.push_back(i);
  }
  return out;
}

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t cols,
                                 std::vector<double> values,
                                 std::vector<std::string> sample_ids, Metric metric_hint)
    : rows_(rows),
      cols_(cols),
      values_(std::move(values)),
      sample_ids_(std::move(sample_ids)),
      metric_hint_(metric_hint) {
  if (rows_ < 1 || cols_ < 1) {
    fail(ErrorCode::kValidation, "embedding matrix needs n >= 1 and d >= 1");
  }
  if (values_.size() != rows_ * cols_) {
    fail(ErrorCode::kValidation, "embedding matrix has " +
                                     std::to_string(values_.size()) +
                                     " values, expected " +
                                     std::to_string(rows_ * cols_));
  }
  if (sample_ids_.size() != rows_) {
    fail(ErrorCode::kValidation, "row/sample mismatch: " + std::to_string(rows_) +
                                     " rows, " + std::to_string(sample_ids_.size()) +
                                     " sample ids");
  }
  for (std::size_t i = 0; i < values_.size(); ++i) {
    if (!std::isfinite(values_[i])) {
      fail(ErrorCode::kValidation, "non-finite value at row " +
                                       std::to_string(i / cols_) + ", col " +
                                       std::to_string(i % cols_));
    }
  }
}

EmbeddingMatrix EmbeddingMatrix::select_rows(std::span<const std::size_t> indices) const {
  std::vector<double> v;
  v.reserve(indices.size() * cols_);
  std::vector<std::string> ids;
  ids.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= rows_) fail(ErrorCode::kInvalidArgument, "row index out of range");
    const auto r = row(i);
    v.insert(v.end(), r.begin(), r.end());
    ids.push_back(sample_ids_[i]);
  }
  return EmbeddingMatrix(indices.size(), cols_, std::move(v), std::move(ids),
                         metric_hint_);
}

EmbeddingMatrix EmbeddingMatrix::normalized() const {
  std::vector<double> v(values_);
  for (std::size_t i = 0; i < rows_; ++i) {
    double sq = 0.0;
    for (std::size_t j = 0; j < cols_; ++j) sq += v[i * cols_ + j] * v[i * cols_ + j];
    if (sq == 0.0) {
      fail(ErrorCode::kInvalidArgument,
           "zero-norm row " + std::to_string(i) + " cannot be cosine-normalized");
    }
    const double inv = 1.0 / std::sqrt(sq);
    for (std::size_t j = 0; j < cols_; ++j) v[i * cols_ + j] *= inv;
  }
  return EmbeddingMatrix(rows_, cols_, std::move(v), sample_ids_, metric_hint_);
}

// ---------------------------------------------------------------------------
// Manifest I/O

static json read_json_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorCode::kValidation, path.string() + ": invalid JSON: " + e.what());
  }
}

static std::vector<double> read_f32_payload(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kIo, "cannot open embedding payload " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() % 4 != 0) {
    fail(ErrorCode::kValidation, "payload size is not a multiple of 4 bytes");
  }
  std::vector<double> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * i]) |
                               static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8 |
                               static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16 |
                               static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24;
    out[i] = static_cast<double>(std::bit_cast<float>(bits));
  }
  return out;
}

static void write_f32_payload(const std::filesystem::path& path,
                              const std::vector<double>& values) {
  std::vector<unsigned char> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
    bytes[4 * i] = static_cast<unsigned char>(bits);
    bytes[4 * i + 1] = static_cast<unsigned char>(bits >> 8);
    bytes[4 * i + 2] = static_cast<unsigned char>(bits >> 16);
    bytes[4 * i + 3] = static_cast<unsigned char>(bits >> 24);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "short write to " + path.string());
}

LoadedDataset load_dataset(const std::filesystem::path& manifest_path) {
  if (!std::filesystem::exists(manifest_path)) {
    fail(ErrorCode::kIo, "manifest not found: " + manifest_path.string());
  }
  const json m = read_json_file(manifest_path);
  Dataset ds;
  std::string embedding_file;
  std::size_t dim = 0;
  Metric metric = Metric::kEuclidean;
  try {
    ds.name = m.at("name").get<std::string>();
    ds.task = parse_task_kind(m.at("task_kind").get<std::string>());
    if (m.contains("class_names")) {
      ds.class_names = m.at("class_names").get<std::vector<std::string>>();
    }
    for (const auto& s : m.at("samples")) {
      SampleRecord r;
      r.id = s.at("id").get<std::string>();
      if (s.contains("label") && !s.at("label").is_null()) {
        r.label = s.at("label").get<double>();
      }
      r.split = parse_split(s.value("split", std::string("train")));
      ds.samples.push_back(std::move(r));
    }
    if (m.contains("metadata")) {
      const auto& md = m.at("metadata");
      ds.metadata.description = md.value("description", std::string());
      if (md.contains("features")) {
        ds.metadata.features = md.at("features").get<std::map<std::string, std::string>>();
      }
      if (md.contains("classes")) {
        ds.metadata.classes = md.at("classes").get<std::map<std::string, std::string>>();
      }
    }
    embedding_file = m.at("embedding_file").get<std::string>();
    dim = m.at("embedding_dim").get<std::size_t>();
    metric = parse_metric(m.value("metric_hint", std::string("euclidean")));
  } catch (const json::exception& e) {
    fail(ErrorCode::kValidation,
         manifest_path.string() + ": malformed manifest: " + e.what());
  }
  ds.validate();
  if (dim == 0) fail(ErrorCode::kValidation, "embedding_dim must be >= 1");

  const auto payload_path = manifest_path.parent_path() / embedding_file;
  auto values = read_f32_payload(payload_path);
  if (values.size() % dim != 0) {
    fail(ErrorCode::kValidation, "payload size is not a multiple of embedding_dim");
  }
  const std::size_t rows = values.size() / dim;
  if (rows != ds.samples.size()) {
    fail(ErrorCode::kValidation, "row/sample mismatch: payload has " +
                                     std::to_string(rows) + " rows, manifest lists " +
                                     std::to_string(ds.samples.size()) + " samples");
  }
  std::vector<std::string> ids;
  ids.reserve(rows);
  for (const auto& s : ds.samples) ids.push_back(s.id);
  EmbeddingMatrix emb(rows, dim, std::move(values), std::move(ids), metric);
  return {std::move(ds), std::move(emb)};
}

void save_dataset(const std::filesystem::path& manifest_path, const Dataset& ds,
                  const EmbeddingMatrix& emb, std::optional<std::string> embedding_file) {
  ds.validate();
  if (emb.rows() != ds.samples.size()) {
    fail(ErrorCode::kValidation, "row/sample mismatch while saving");
  }
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    if (emb.sample_ids()[i] != ds.samples[i].id) {
      fail(ErrorCode::kValidation, "embedding row " + std::to_string(i) +
                                       " is not aligned with sample \"" +
                                       ds.samples[i].id + "\"");
    }
  }
  const std::string file =
      embedding_file.value_or(manifest_path.stem().string() + ".f32");

  json m;
  m["name"] = ds.name;
  m["task_kind"] = to_string(ds.task);
  m["class_names"] = ds.class_names;
  json samples = json::array();
  for (const auto& s : ds.samples) {
    json j;
    j["id"] = s.id;
    if (s.label) {
      if (ds.task == TaskKind::kClassification) {
        j["label"] = s.class_index();
      } else {
        j["label"] = *s.label;
      }
    } else {
      j["label"] = nullptr;
    }
    j["split"] = to_string(s.split);
    samples.push_back(std::move(j));
  }
  m["samples"] = std::move(samples);
  if (!ds.metadata.empty()) {
    m["metadata"] = {{"description", ds.metadata.description},
                     {"features", ds.metadata.features},
                     {"classes", ds.metadata.classes}};
  }
  m["embedding_file"] = file;
  m["embedding_dim"] = emb.cols();
  m["metric_hint"] = to_string(emb.metric_hint());

  if (manifest_path.has_parent_path()) {
    std::filesystem::create_directories(manifest_path.parent_path());
  }
  write_f32_payload(manifest_path.parent_path() / file, emb.values());
  std::ofstream out(manifest_path, std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + manifest_path.string());
  out << m.dump(2) << '\n';
}

// ---------------------------------------------------------------------------
// Splitting

Dataset split_dataset(const Dataset& ds, double query_fraction, std::uint64_t seed) {
  if (!(query_fraction > 0.0 && query_fraction < 1.0)) {
    fail(ErrorCode::kInvalidArgument, "query fraction must lie in (0, 1)");
  }
  if (ds.samples.size() < 2) {
    fail(ErrorCode::kInvalidArgument, "splitting needs at least 2 samples");
  }
  Dataset out = ds;
  Rng rng(seed);

  std::vector<std::vector<std::size_t>> groups;
  if (ds.task == TaskKind::kClassification) {
    groups.resize(ds.num_classes());
  } else {
    groups.resize(1);
  }
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    const auto& s = ds.samples[i];
    if (!s.label) {
      out.samples[i].split = Split::kQuery;
      continue;
    }
    const std::size_t g =
        ds.task == TaskKind::kClassification ? static_cast<std::size_t>(s.class_index()) : 0;
    groups[g].push_back(i);
  }
  for (std::size_t g = 0; g < groups.size(); ++g) {
    auto& members = groups[g];
    if (members.empty()) continue;
    rng.shuffle(members.begin(), members.end());
    const auto n_query = static_cast<std::size_t>(
        std::llround(query_fraction * static_cast<double>(members.size())));
    if (n_query >= members.size()) {
      const std::string what = ds.task == TaskKind::kClassification
                                   ? "class \"" + ds.class_names[g] + "\""
                                   : std::string("the dataset");
      fail(ErrorCode::kInvalidArgument,
           "query fraction leaves " + what + " without train samples");
    }
    for (std::size_t r = 0; r < members.size(); ++r) {
      out.samples[members[r]].split = r < n_query ? Split::kQuery : Split::kTrain;
    }
  }
  return out;
}

}  // namespace marvis
