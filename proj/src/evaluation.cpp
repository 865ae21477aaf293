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

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <fstream>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "marvis/error.hpp"
#include "marvis/eval.hpp"
#include "marvis/random.hpp"

namespace marvis {

using nlohmann::json;

std::string to_string(LayoutStrategy s) {
  return s == LayoutStrategy::kShared ? "shared" : "per_query";
}

LayoutStrategy parse_layout_strategy(const std::string& s) {
  if (s == "shared") return LayoutStrategy::kShared;
  if (s == "per_query") return LayoutStrategy::kPerQuery;
  fail(ErrorCode::kValidation, "unknown layout strategy \"" + s + "\"");
}

void PipelineConfig::validate() const {
  if (!(zoom_scale >= 1.0) || !std::isfinite(zoom_scale)) {
    fail(ErrorCode::kValidation, "zoom_scale must be >= 1");
  }
  if (!(margin_fraction >= 0.0)) fail(ErrorCode::kValidation, "margin_fraction must be >= 0");
  if (k && *k < 1) fail(ErrorCode::kValidation, "k must be >= 1");
  if (max_layout_points < 3) fail(ErrorCode::kValidation, "max_layout_points must be >= 3");
  if (prompt.distance_decimals < 0 || prompt.distance_decimals > 12) {
    fail(ErrorCode::kValidation, "distance_decimals must lie in [0, 12]");
  }
  try {
    tsne.validate();
    render.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kValidation, e.what());
  }
}

namespace {

std::vector<std::size_t> subsample_train(const Dataset& ds,
                                         const std::vector<std::size_t>& train_rows,
                                         std::size_t cap, std::uint64_t seed) {
  if (train_rows.size() <= cap) {
    std::vector<std::size_t> all(train_rows.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    return all;
  }
  Rng rng(seed ^ 0x5eed5eedULL);
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < train_rows.size(); ++i) {
    const auto& s = ds.samples[train_rows[i]];
    const int g = ds.task == TaskKind::kClassification ? s.class_index() : 0;
    groups[g].push_back(i);
  }
  std::vector<std::size_t> picked;
  const double ratio = static_cast<double>(cap) / static_cast<double>(train_rows.size());
  for (auto& [g, members] : groups) {
    rng.shuffle(members.begin(), members.end());
    const auto quota = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::llround(ratio * static_cast<double>(members.size()))));
    for (std::size_t r = 0; r < std::min(quota, members.size()); ++r) {
      picked.push_back(members[r]);
    }
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

std::string safe_name(std::size_t ordinal, const std::string& id) {
  char prefix[32];
  std::snprintf(prefix, sizeof prefix, "q%04zu_", ordinal);
  std::string out = prefix;
  for (char c : id) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
                    c == '.' || c == '-' || c == '_';
    out.push_back(ok ? c : '_');
  }
  return out;
}

void write_bytes(const std::filesystem::path& path, const void* data, std::size_t size) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot write " + path.string());
  out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_bytes(path, text.data(), text.size());
}

std::optional<std::string> metadata_text(const Dataset& ds) {
  const auto& md = ds.metadata;
  std::string out = md.description;
  if (!md.classes.empty()) {
    if (!out.empty()) out += "\n";
    out += "Class descriptions:";
    for (const auto& [name, desc] : md.classes) out += "\n- " + name + ": " + desc;
  }
  if (out.empty()) return std::nullopt;
  return out;
}

}  // namespace

PreparedRun prepare_run(const LoadedDataset& data, const PipelineConfig& config) {
  config.validate();
  const Dataset& ds = data.dataset;
  const EmbeddingMatrix& emb = data.embeddings;
  ds.validate();
  if (emb.rows() != ds.samples.size()) {
    fail(ErrorCode::kValidation, "row/sample mismatch between dataset and embeddings");
  }

  PreparedRun run;
  run.data = &data;
  run.config = config;
  run.train_rows = ds.indices(Split::kTrain);
  run.query_rows = ds.indices(Split::kQuery);
  if (run.query_rows.empty()) fail(ErrorCode::kValidation, "dataset has no query samples");
  if (run.train_rows.empty()) fail(ErrorCode::kValidation, "dataset has no train samples");

  run.train_embeddings = emb.select_rows(run.train_rows);
  for (std::size_t r : run.train_rows) run.train_labels.push_back(ds.samples[r].label);

  run.knn.metric = config.knn_metric.value_or(emb.metric_hint());
  run.knn.k = config.k.value_or(default_k(run.train_rows.size()));
  if (run.knn.k > run.train_rows.size()) {
    fail(ErrorCode::kValidation, "k = " + std::to_string(run.knn.k) + " exceeds the " +
                                     std::to_string(run.train_rows.size()) + " train samples");
  }
  for (std::size_t r : run.query_rows) {
    run.neighbors.push_back(knn_query(run.train_embeddings, run.train_labels, emb.row(r),
                                      run.knn, ds.task, ds.samples[r].id));
  }
  if (ds.task == TaskKind::kClassification) {
    run.cmap = assign_palette(ds.class_names);
  } else {
    double sum = 0.0;
    for (const auto& l : run.train_labels) sum += *l;
    run.train_target_mean = sum / static_cast<double>(run.train_labels.size());
  }

  // Layout subset: a stratified sample of the train split plus every
  // neighbor of every query, so zoom boxes always find their neighbors.
  auto subset =
      subsample_train(ds, run.train_rows, config.max_layout_points, config.tsne.seed);
  std::vector<bool> in_subset(run.train_rows.size(), false);
  for (std::size_t i : subset) in_subset[i] = true;
  for (const auto& ns : run.neighbors) {
    for (const auto& nb : ns.neighbors) in_subset[nb.row] = true;
  }
  for (std::size_t i = 0; i < in_subset.size(); ++i) {
    if (in_subset[i]) run.layout_train.push_back(i);
  }

  const std::size_t n_layout =
      run.layout_train.size() +
      (config.layout == LayoutStrategy::kShared ? run.query_rows.size() : 1);
  if (n_layout < 3) fail(ErrorCode::kValidation, "a layout needs at least 3 points");
  run.effective_perplexity =
      std::min(config.tsne.perplexity, std::max(1.0, static_cast<double>(n_layout - 1) / 3.0));
  run.config.tsne.perplexity = run.effective_perplexity;

  if (config.layout == LayoutStrategy::kShared) {
    const EmbeddingMatrix layout_emb = run.train_embeddings.select_rows(run.layout_train);
    std::vector<std::optional<double>> labels;
    for (std::size_t i : run.layout_train) labels.push_back(run.train_labels[i]);
    run.shared_layout = joint_layout(layout_emb, emb.select_rows(run.query_rows),
                                     run.config.tsne, labels);
  }
  return run;
}

QueryVisual visualize_query(const PreparedRun& run, std::size_t q) {
  if (q >= run.query_rows.size()) fail(ErrorCode::kInvalidArgument, "query index out of range");
  const auto& cfg = run.config;
  QueryVisual vis;
  if (run.shared_layout) {
    vis.layout = *run.shared_layout;
    vis.query_index = run.layout_train.size() + q;
  } else {
    const EmbeddingMatrix layout_emb = run.train_embeddings.select_rows(run.layout_train);
    std::vector<std::optional<double>> labels;
    for (std::size_t i : run.layout_train) labels.push_back(run.train_labels[i]);
    const std::size_t row = run.query_rows[q];
    vis.layout = joint_layout(layout_emb, run.data->embeddings.select_rows({&row, 1}), cfg.tsne,
                              labels);
    vis.query_index = run.layout_train.size();
  }
  for (const auto& nb : run.neighbors[q].neighbors) {
    const auto it = std::lower_bound(run.layout_train.begin(), run.layout_train.end(), nb.row);
    vis.neighbor_indices.push_back(static_cast<std::size_t>(it - run.layout_train.begin()));
  }
  const Viewport vp = compute_zoom(vis.layout, vis.query_index, vis.neighbor_indices,
                                   cfg.zoom_scale, cfg.margin_fraction);
  RenderOptions opts = cfg.render;
  if (cfg.mode == PromptMode::kTsneKnn) opts.show_knn_edges = true;
  if (run.cmap) {
    vis.render =
        render_scatter(vis.layout, *run.cmap, vp, opts, vis.query_index, vis.neighbor_indices);
  } else {
    vis.render = render_regression_scatter(vis.layout, vp, opts, vis.query_index,
                                           vis.neighbor_indices);
  }
  return vis;
}

PromptBundle prompt_for_query(const PreparedRun& run, std::size_t q, const QueryVisual& vis) {
  const Dataset& ds = run.data->dataset;
  const auto meta = run.config.include_metadata ? metadata_text(ds) : std::nullopt;
  return build_prompt(vis.render, &run.neighbors[q], run.cmap ? &*run.cmap : nullptr, meta,
                      run.config.mode, ds.task, run.config.prompt);
}

EvalReport run_evaluation(const LoadedDataset& data, const PipelineConfig& config,
                          VlmBackend& backend) {
  const PreparedRun run = prepare_run(data, config);
  const Dataset& ds = data.dataset;
  const bool classification = ds.task == TaskKind::kClassification;
  const std::optional<ClassMap> parser_map =
      classification ? std::optional<ClassMap>(ClassMap::from_color_map(*run.cmap))
                     : std::nullopt;
  if (config.artifact_dir) std::filesystem::create_directories(*config.artifact_dir);

  const std::size_t n = run.query_rows.size();
  std::vector<QueryRecord> records(n);

  auto process = [&](std::size_t q) {
    const auto& sample = ds.samples[run.query_rows[q]];
    QueryRecord& rec = records[q];
    rec.id = sample.id;
    rec.truth = sample.label;
    const KnnPrediction knn = knn_predict(run.neighbors[q], ds.task);
    rec.knn_prediction = knn.value;
    rec.knn_confidence = knn.confidence;

    const QueryVisual vis = visualize_query(run, q);
    const PromptBundle prompt = prompt_for_query(run, q, vis);
    std::filesystem::path dir;
    if (config.artifact_dir) {
      dir = *config.artifact_dir / safe_name(q, sample.id);
      std::filesystem::create_directories(dir);
      write_bytes(dir / "viz.png", vis.render.png.data(), vis.render.png.size());
      write_text(dir / "viz.json", vis.render.sidecar_json(run.cmap ? &*run.cmap : nullptr));
      write_text(dir / "prompt.txt", prompt.system_text + "\n\n" + prompt.user_text);
    }

    RawResponse resp;
    try {
      resp = backend.respond(prompt, run.neighbors[q], run.cmap ? &*run.cmap : nullptr);
    } catch (const Error& e) {
      rec.failed = true;
      rec.channel = "failed";
      rec.error = e.what();
      if (!dir.empty()) write_text(dir / "error.txt", rec.error);
      return;
    }
    rec.raw_text = resp.text;
    rec.latency_seconds = resp.latency_seconds;
    rec.retries = resp.retries;
    if (!dir.empty()) write_text(dir / "response.txt", resp.text);
    try {
      const Prediction p = classification ? parse_classification(resp.text, *parser_map)
                                          : parse_regression(resp.text);
      rec.prediction = p.value;
      rec.channel = to_string(p.channel);
      rec.parsed = true;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::kUnparseable) throw;
      rec.parsed = false;
      rec.channel = "unparseable";
      rec.error = e.what();
      rec.prediction = classification ? -1.0 : run.train_target_mean;
    }
  };

  const std::size_t workers =
      std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, backend.max_concurrency())));
  if (workers <= 1) {
    for (std::size_t q = 0; q < n; ++q) process(q);
  } else {
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t q = next++; q < n; q = next++) {
          try {
            process(q);
          } catch (...) {
            std::lock_guard lock(err_mu);
            if (!first_error) first_error = std::current_exception();
          }
        }
      });
    }
    for (auto& t : pool) t.join();
    if (first_error) std::rethrow_exception(first_error);
  }

  EvalReport report;
  report.dataset = ds.name;
  report.task = ds.task;
  report.mode = config.mode;
  report.k = run.knn.k;
  report.effective_perplexity = run.effective_perplexity;
  report.n_queries = n;
  report.unparseable_policy = classification ? "unparseable answers are scored as incorrect"
                                             : "unparseable answers are scored as the "
                                               "train-target mean";
  std::vector<int> truth_c, pred_c;
  std::vector<double> truth_r, pred_r;
  for (const auto& rec : records) {
    if (rec.failed) {
      ++report.n_failed;
      continue;
    }
    ++report.n_completed;
    if (!rec.parsed) ++report.n_unparseable;
    if (!rec.truth) continue;
    if (classification) {
      truth_c.push_back(static_cast<int>(*rec.truth));
      pred_c.push_back(static_cast<int>(*rec.prediction));
    } else {
      truth_r.push_back(*rec.truth);
      pred_r.push_back(*rec.prediction);
    }
  }
  report.complete = report.n_failed == 0;
  report.n_scored = classification ? truth_c.size() : truth_r.size();
  if (classification && !truth_c.empty()) {
    report.classification = classification_metrics(truth_c, pred_c, ds.num_classes());
    report.ci95 = ci95(report.classification->accuracy, truth_c.size());
  }
  if (!classification && truth_r.size() >= 2) {
    report.regression = regression_metrics(truth_r, pred_r);
  }

  if (config.analyze_reasoning) {
    std::vector<double> abs_err;
    for (const auto& rec : records) {
      if (!rec.failed && rec.truth && !classification) {
        abs_err.push_back(std::abs(*rec.prediction - *rec.truth));
      }
    }
    double median_err = 0.0;
    if (!abs_err.empty()) {
      std::sort(abs_err.begin(), abs_err.end());
      median_err = abs_err[(abs_err.size() - 1) / 2];
    }
    std::vector<ReasoningRecord> rr;
    for (const auto& rec : records) {
      if (rec.failed) continue;
      bool correct = false;
      if (rec.parsed && rec.truth) {
        correct = classification ? static_cast<int>(*rec.prediction) == static_cast<int>(*rec.truth)
                                 : std::abs(*rec.prediction - *rec.truth) <= median_err;
      }
      rr.push_back({rec.raw_text, correct});
    }
    if (!rr.empty()) report.reasoning = analyze_reasoning(rr);
  }
  report.records = std::move(records);
  return report;
}

std::size_t write_visualizations(const LoadedDataset& data, const PipelineConfig& config,
                                 const std::filesystem::path& out_dir) {
  const PreparedRun run = prepare_run(data, config);
  std::filesystem::create_directories(out_dir);
  if (run.shared_layout) write_text(out_dir / "layout.json", run.shared_layout->to_json());
  for (std::size_t q = 0; q < run.query_rows.size(); ++q) {
    const QueryVisual vis = visualize_query(run, q);
    const std::string stem = safe_name(q, data.dataset.samples[run.query_rows[q]].id);
    write_bytes(out_dir / (stem + ".png"), vis.render.png.data(), vis.render.png.size());
    json side = json::parse(vis.render.sidecar_json(run.cmap ? &*run.cmap : nullptr));
    side["query_id"] = data.dataset.samples[run.query_rows[q]].id;
    side["neighbors"] = json::parse(run.neighbors[q].to_json());
    write_text(out_dir / (stem + ".json"), side.dump(2));
  }
  return run.query_rows.size();
}

// ---------------------------------------------------------------------------
// Report output

std::string EvalReport::to_json() const {
  json j;
  j["dataset"] = dataset;
  j["task_kind"] = marvis::to_string(task);
  j["mode"] = marvis::to_string(mode);
  j["k"] = k;
  j["effective_perplexity"] = effective_perplexity;
  j["n_queries"] = n_queries;
  j["n_completed"] = n_completed;
  j["n_failed"] = n_failed;
  j["n_unparseable"] = n_unparseable;
  j["n_scored"] = n_scored;
  j["unparseable_policy"] = unparseable_policy;
  j["complete"] = complete;
  json metrics = json::object();
  if (classification) {
    metrics["accuracy"] = classification->accuracy;
    metrics["balanced_accuracy"] = classification->balanced_accuracy;
    metrics["macro_f1"] = classification->macro_f1;
  }
  if (regression) {
    metrics["r2"] = regression->r2 ? json(*regression->r2) : json();
    metrics["r2_raw"] = regression->r2_raw ? json(*regression->r2_raw) : json();
    metrics["mae"] = regression->mae;
    metrics["rmse"] = regression->rmse;
  }
  if (ci95) metrics["ci95"] = *ci95;
  j["metrics"] = std::move(metrics);
  if (reasoning) j["reasoning"] = json::parse(reasoning->to_json());
  j["records"] = json::array();
  for (const auto& r : records) {
    j["records"].push_back({{"id", r.id},
                            {"truth", r.truth ? json(*r.truth) : json()},
                            {"prediction", r.prediction ? json(*r.prediction) : json()},
                            {"channel", r.channel},
                            {"parsed", r.parsed},
                            {"failed", r.failed},
                            {"error", r.error},
                            {"latency_seconds", r.latency_seconds},
                            {"retries", r.retries},
                            {"knn_prediction", r.knn_prediction},
                            {"knn_confidence", r.knn_confidence},
                            {"raw_text", r.raw_text}});
  }
  return j.dump(2);
}

std::string EvalReport::to_table() const {
  std::ostringstream o;
  char buf[128];
  o << "dataset: " << dataset << "  task: " << marvis::to_string(task)
    << "  mode: " << marvis::to_string(mode) << "  k: " << k << "\n";
  o << "queries: " << n_queries << "  completed: " << n_completed << "  failed: " << n_failed
    << "  unparseable: " << n_unparseable << "  complete: " << (complete ? "yes" : "no")
    << "\n";
  if (classification) {
    std::snprintf(buf, sizeof buf, "%-18s %.4f", "accuracy", classification->accuracy);
    o << buf;
    if (ci95) {
      std::snprintf(buf, sizeof buf, " ± %.4f", *ci95);
      o << buf;
    }
    o << "\n";
    std::snprintf(buf, sizeof buf, "%-18s %.4f\n%-18s %.4f\n", "balanced accuracy",
                  classification->balanced_accuracy, "macro F1", classification->macro_f1);
    o << buf;
  }
  if (regression) {
    if (regression->r2) {
      std::snprintf(buf, sizeof buf, "%-18s %.4f\n", "R2 (floored)", *regression->r2);
    } else {
      std::snprintf(buf, sizeof buf, "%-18s undefined (constant truth)\n", "R2 (floored)");
    }
    o << buf;
    std::snprintf(buf, sizeof buf, "%-18s %.4f\n%-18s %.4f\n", "MAE", regression->mae, "RMSE",
                  regression->rmse);
    o << buf;
  }
  if (reasoning) {
    const auto& r = reasoning->overall;
    std::snprintf(buf, sizeof buf, "%-18s %.1f chars, %.1f words, %.2f color mentions\n",
                  "responses", r.mean_chars, r.mean_words, r.mean_color_mentions);
    o << buf;
  }
  return o.str();
}

}  // namespace marvis
