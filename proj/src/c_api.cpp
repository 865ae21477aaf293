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

#include "marvis/marvis.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <new>
#include <string>

#include "marvis/config.hpp"
#include "marvis/data.hpp"
#include "marvis/dimred.hpp"
#include "marvis/error.hpp"
#include "marvis/eval.hpp"
#include "marvis/knn.hpp"
#include "marvis/parser.hpp"

struct marvis_dataset {
  marvis::LoadedDataset data;
};

struct marvis_layout {
  marvis::Layout2D layout;
};

struct marvis_report {
  marvis::EvalReport report;
};

namespace {

thread_local std::string g_last_error;

marvis_status record(marvis_status s, const char* msg) {
  g_last_error = msg;
  return s;
}

// Runs `body`, translating exceptions into status codes.
template <typename F>
marvis_status guarded(F&& body) {
  try {
    g_last_error.clear();
    return body();
  } catch (const marvis::Error& e) {
    return record(static_cast<marvis_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return record(MARVIS_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return record(MARVIS_ERR_INTERNAL, e.what());
  } catch (...) {
    return record(MARVIS_ERR_INTERNAL, "unknown failure");
  }
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out) std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) marvis::fail(marvis::ErrorCode::kIo, "cannot write " + p.string());
  out << text;
}

marvis::RunConfig run_config(const char* json, const char* dir) {
  if (!json) marvis::fail(marvis::ErrorCode::kInvalidArgument, "config_json is null");
  marvis::RunConfig cfg = marvis::parse_run_config(json, dir ? dir : "");
  cfg.validate();
  return cfg;
}

marvis::LoadedDataset load_for_run(const marvis::RunConfig& cfg) {
  try {
    return marvis::load_dataset(cfg.dataset);
  } catch (const marvis::Error& e) {
    marvis::fail(marvis::ErrorCode::kValidation, e.what());
  }
}

#define REQUIRE_ARG(cond)                                                     \
  do {                                                                         \
    if (!(cond)) return record(MARVIS_ERR_INVALID_ARGUMENT, "null argument"); \
  } while (0)

}  // namespace

extern "C" {

const char* marvis_version(void) { return "0.1.0"; }

const char* marvis_last_error(void) { return g_last_error.c_str(); }

void marvis_string_free(char* s) { std::free(s); }

marvis_status marvis_dataset_load(const char* manifest_path, marvis_dataset** out) {
  REQUIRE_ARG(manifest_path && out);
  return guarded([&] {
    *out = new marvis_dataset{marvis::load_dataset(manifest_path)};
    return MARVIS_OK;
  });
}

marvis_status marvis_dataset_save(const marvis_dataset* ds, const char* manifest_path) {
  REQUIRE_ARG(ds && manifest_path);
  return guarded([&] {
    marvis::save_dataset(manifest_path, ds->data.dataset, ds->data.embeddings);
    return MARVIS_OK;
  });
}

void marvis_dataset_free(marvis_dataset* ds) { delete ds; }

size_t marvis_dataset_num_samples(const marvis_dataset* ds) {
  return ds ? ds->data.dataset.samples.size() : 0;
}

size_t marvis_dataset_dim(const marvis_dataset* ds) { return ds ? ds->data.embeddings.cols() : 0; }

size_t marvis_dataset_num_classes(const marvis_dataset* ds) {
  return ds ? ds->data.dataset.num_classes() : 0;
}

marvis_status marvis_featurize_csv(const char* csv_path, const char* name, double query_fraction,
                                   uint64_t seed, marvis_dataset** out) {
  REQUIRE_ARG(csv_path && name && out);
  return guarded([&] {
    const marvis::Table table = marvis::read_csv_table(csv_path);
    *out = new marvis_dataset{marvis::build_tabular_dataset(table, name, query_fraction, seed)};
    return MARVIS_OK;
  });
}

void marvis_tsne_params_default(marvis_tsne_params* p) {
  if (!p) return;
  const marvis::TsneParams d;
  *p = {d.perplexity, d.iterations, d.learning_rate, d.early_exaggeration,
        d.early_exaggeration_iters, d.momentum, d.final_momentum, d.seed};
}

marvis_status marvis_tsne_fit(const double* x, size_t rows, size_t cols, int cosine,
                              const marvis_tsne_params* p, marvis_layout** out) {
  REQUIRE_ARG(x && p && out);
  return guarded([&] {
    std::vector<std::string> ids(rows);
    for (size_t i = 0; i < rows; ++i) ids[i] = std::to_string(i);
    const marvis::EmbeddingMatrix m(rows, cols, std::vector<double>(x, x + rows * cols),
                                    std::move(ids),
                                    cosine ? marvis::Metric::kCosine : marvis::Metric::kEuclidean);
    marvis::TsneParams tp;
    tp.perplexity = p->perplexity;
    tp.iterations = p->iterations;
    tp.learning_rate = p->learning_rate;
    tp.early_exaggeration = p->early_exaggeration;
    tp.early_exaggeration_iters = p->early_exaggeration_iters;
    tp.momentum = p->momentum;
    tp.final_momentum = p->final_momentum;
    tp.seed = p->seed;
    *out = new marvis_layout{marvis::tsne_fit(m, tp)};
    return MARVIS_OK;
  });
}

size_t marvis_layout_size(const marvis_layout* l) { return l ? l->layout.size() : 0; }

marvis_status marvis_layout_coords(const marvis_layout* l, double* xy) {
  REQUIRE_ARG(l && xy);
  for (size_t i = 0; i < l->layout.size(); ++i) {
    xy[2 * i] = l->layout.coords[i].x;
    xy[2 * i + 1] = l->layout.coords[i].y;
  }
  return MARVIS_OK;
}

marvis_status marvis_layout_final_kl(const marvis_layout* l, double* kl) {
  REQUIRE_ARG(l && kl);
  if (l->layout.kl_trace.empty()) return record(MARVIS_ERR_INVALID_ARGUMENT, "no KL recorded");
  *kl = l->layout.kl_trace.back().kl;
  return MARVIS_OK;
}

char* marvis_layout_to_json(const marvis_layout* l) {
  return l ? dup_string(l->layout.to_json()) : nullptr;
}

void marvis_layout_free(marvis_layout* l) { delete l; }

size_t marvis_default_k(size_t n_train) { return marvis::default_k(n_train); }

double marvis_ci95(double p, size_t n) {
  try {
    return marvis::ci95(p, n);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return -1.0;
  }
}

marvis_status marvis_parse_classification(const char* text, const char* const* class_names,
                                          const char* const* color_names, size_t n_classes,
                                          size_t* out_index) {
  REQUIRE_ARG(text && class_names && color_names && out_index);
  return guarded([&] {
    std::vector<std::pair<std::string, std::string>> entries;
    for (size_t i = 0; i < n_classes; ++i) {
      if (!class_names[i] || !color_names[i]) {
        marvis::fail(marvis::ErrorCode::kInvalidArgument, "null class or color name");
      }
      entries.emplace_back(class_names[i], color_names[i]);
    }
    const marvis::Prediction p =
        marvis::parse_classification(text, marvis::ClassMap(std::move(entries)));
    *out_index = static_cast<size_t>(p.value);
    return MARVIS_OK;
  });
}

marvis_status marvis_parse_regression(const char* text, double* out_value) {
  REQUIRE_ARG(text && out_value);
  return guarded([&] {
    *out_value = marvis::parse_regression(text).value;
    return MARVIS_OK;
  });
}

marvis_status marvis_run_visualize(const char* config_json, const char* config_dir,
                                   size_t* n_written) {
  return guarded([&] {
    const marvis::RunConfig cfg = run_config(config_json, config_dir);
    const marvis::LoadedDataset data = load_for_run(cfg);
    const size_t n = marvis::write_visualizations(data, cfg.effective_pipeline(), cfg.out);
    write_file(cfg.out / "config.json", cfg.to_json());
    if (n_written) *n_written = n;
    return MARVIS_OK;
  });
}

marvis_status marvis_run_evaluate(const char* config_json, const char* config_dir,
                                  marvis_report** out) {
  REQUIRE_ARG(out);
  *out = nullptr;
  return guarded([&] {
    const marvis::RunConfig cfg = run_config(config_json, config_dir);
    const marvis::LoadedDataset data = load_for_run(cfg);
    marvis::PipelineConfig pc = cfg.effective_pipeline();
    if (cfg.artifacts) pc.artifact_dir = cfg.out / "queries";
    std::filesystem::create_directories(cfg.out);
    std::unique_ptr<marvis::VlmBackend> backend;
    if (cfg.mock) {
      backend = std::make_unique<marvis::MockBackend>();
    } else {
      backend = std::make_unique<marvis::HttpBackend>(cfg.endpoint);
    }
    auto report = std::make_unique<marvis_report>();
    report->report = marvis::run_evaluation(data, pc, *backend);
    write_file(cfg.out / "report.json", report->report.to_json());
    write_file(cfg.out / "report.txt", report->report.to_table());
    write_file(cfg.out / "config.json", cfg.to_json());
    const bool complete = report->report.complete;
    *out = report.release();
    if (!complete) {
      return record(MARVIS_ERR_INCOMPLETE, "evaluation incomplete: some queries failed");
    }
    return MARVIS_OK;
  });
}

char* marvis_report_to_json(const marvis_report* r) {
  return r ? dup_string(r->report.to_json()) : nullptr;
}

char* marvis_report_to_table(const marvis_report* r) {
  return r ? dup_string(r->report.to_table()) : nullptr;
}

int marvis_report_is_complete(const marvis_report* r) { return r && r->report.complete ? 1 : 0; }

marvis_status marvis_report_accuracy(const marvis_report* r, double* out) {
  REQUIRE_ARG(r && out);
  if (!r->report.classification) {
    return record(MARVIS_ERR_INVALID_ARGUMENT, "report has no classification metrics");
  }
  *out = r->report.classification->accuracy;
  return MARVIS_OK;
}

void marvis_report_free(marvis_report* r) { delete r; }

}  // extern "C"
