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

/* C interface to the marvis library. Every handle is opaque and owned by the
 * caller once returned; release it with the matching *_free function.
 * Functions returning marvis_status leave a message for marvis_last_error()
 * on failure. Strings returned as char* are freed with marvis_string_free. */
#ifndef MARVIS_MARVIS_H_
#define MARVIS_MARVIS_H_

#include <stddef.h>
#include <stdint.h>

#if defined(MARVIS_BUILDING)
#define MARVIS_API __attribute__((visibility("default")))
#else
#define MARVIS_API
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum marvis_status {
  MARVIS_OK = 0,
  MARVIS_ERR_INVALID_ARGUMENT = 1,
  MARVIS_ERR_IO = 2,
  MARVIS_ERR_VALIDATION = 3,
  MARVIS_ERR_NUMERICAL = 4,
  MARVIS_ERR_HTTP = 5,
  MARVIS_ERR_AUTH = 6,
  MARVIS_ERR_MALFORMED_RESPONSE = 7,
  MARVIS_ERR_UNPARSEABLE = 8,
  MARVIS_ERR_INCOMPLETE = 9,
  MARVIS_ERR_INTERNAL = 100
} marvis_status;

MARVIS_API const char* marvis_version(void);
/* Message of the last failure on the calling thread ("" if none). */
MARVIS_API const char* marvis_last_error(void);
MARVIS_API void marvis_string_free(char* s);

/* Datasets */
typedef struct marvis_dataset marvis_dataset;

MARVIS_API marvis_status marvis_dataset_load(const char* manifest_path, marvis_dataset** out);
MARVIS_API marvis_status marvis_dataset_save(const marvis_dataset* ds, const char* manifest_path);
MARVIS_API void marvis_dataset_free(marvis_dataset* ds);
MARVIS_API size_t marvis_dataset_num_samples(const marvis_dataset* ds);
MARVIS_API size_t marvis_dataset_dim(const marvis_dataset* ds);
MARVIS_API size_t marvis_dataset_num_classes(const marvis_dataset* ds);

/* Typed CSV -> featurized dataset with train/query splits. */
MARVIS_API marvis_status marvis_featurize_csv(const char* csv_path, const char* name,
                                              double query_fraction, uint64_t seed,
                                              marvis_dataset** out);

/* t-SNE */
typedef struct marvis_tsne_params {
  double perplexity;
  int iterations;
  double learning_rate;
  double early_exaggeration;
  int early_exaggeration_iters;
  double momentum;
  double final_momentum;
  uint64_t seed;
} marvis_tsne_params;

typedef struct marvis_layout marvis_layout;

MARVIS_API void marvis_tsne_params_default(marvis_tsne_params* p);
/* x is rows*cols row-major; cosine != 0 L2-normalizes rows first. */
MARVIS_API marvis_status marvis_tsne_fit(const double* x, size_t rows, size_t cols, int cosine,
                                         const marvis_tsne_params* p, marvis_layout** out);
MARVIS_API size_t marvis_layout_size(const marvis_layout* l);
/* Writes 2 * size doubles as x0, y0, x1, y1, ... */
MARVIS_API marvis_status marvis_layout_coords(const marvis_layout* l, double* xy);
MARVIS_API marvis_status marvis_layout_final_kl(const marvis_layout* l, double* kl);
MARVIS_API char* marvis_layout_to_json(const marvis_layout* l);
MARVIS_API void marvis_layout_free(marvis_layout* l);

/* Small helpers */
MARVIS_API size_t marvis_default_k(size_t n_train);
MARVIS_API double marvis_ci95(double p, size_t n);

/* Response parsing. class_names[i] is drawn as color_names[i]. */
MARVIS_API marvis_status marvis_parse_classification(const char* text,
                                                     const char* const* class_names,
                                                     const char* const* color_names,
                                                     size_t n_classes, size_t* out_index);
MARVIS_API marvis_status marvis_parse_regression(const char* text, double* out_value);

/* Runs driven by a JSON run configuration. Relative paths in the config are
 * resolved against config_dir (may be NULL or ""). */
typedef struct marvis_report marvis_report;

/* Writes one PNG and one JSON sidecar per query into the configured output
 * directory. */
MARVIS_API marvis_status marvis_run_visualize(const char* config_json, const char* config_dir,
                                              size_t* n_written);
/* Runs the evaluation and writes report.json, report.txt and config.json into
 * the output directory. Returns MARVIS_ERR_INCOMPLETE, with *out still set,
 * when some queries failed. */
MARVIS_API marvis_status marvis_run_evaluate(const char* config_json, const char* config_dir,
                                             marvis_report** out);
MARVIS_API char* marvis_report_to_json(const marvis_report* r);
MARVIS_API char* marvis_report_to_table(const marvis_report* r);
MARVIS_API int marvis_report_is_complete(const marvis_report* r);
/* MARVIS_ERR_INVALID_ARGUMENT when the report holds no classification score. */
MARVIS_API marvis_status marvis_report_accuracy(const marvis_report* r, double* out);
MARVIS_API void marvis_report_free(marvis_report* r);

#ifdef __cplusplus
}
#endif

#endif /* MARVIS_MARVIS_H_ */
