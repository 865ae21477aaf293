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

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "marvis/marvis.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitValidation = 2;
constexpr int kExitIncomplete = 3;

struct Flags {
  std::string config;
  std::string dataset;
  bool mock = false;
  std::string mode;
  std::optional<double> zoom_scale;
  std::optional<long long> k;
  std::optional<unsigned long long> seed;
  std::string out;
  bool analyze_reasoning = false;
  std::string csv;
  std::string manifest;
  std::string name;
  double query_fraction = 0.25;
};

int exit_code(marvis_status s) {
  switch (s) {
    case MARVIS_OK:
      return kExitOk;
    case MARVIS_ERR_INCOMPLETE:
      return kExitIncomplete;
    case MARVIS_ERR_INTERNAL:
      return kExitFailure;
    default:
      return kExitValidation;
  }
}

int report_error(marvis_status s) {
  std::cerr << "marvis: error: " << marvis_last_error() << "\n";
  return exit_code(s);
}

struct ConfigText {
  std::string json;
  std::string dir;
};

// Loads the config file (if any) and applies flag overrides; flags win.
// Flag paths are taken relative to the working directory.
ConfigText merged_config(const Flags& f) {
  json cfg = json::object();
  std::string dir;
  if (!f.config.empty()) {
    std::ifstream in(f.config, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read config " + f.config);
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
      cfg = json::parse(ss.str());
    } catch (const json::parse_error& e) {
      throw std::runtime_error("config is not valid JSON: " + std::string(e.what()));
    }
    if (!cfg.is_object()) throw std::runtime_error("config must be a JSON object");
    dir = fs::path(f.config).parent_path().string();
  }
  if (!f.dataset.empty()) cfg["dataset"] = fs::absolute(f.dataset).string();
  if (!f.out.empty()) cfg["out"] = fs::absolute(f.out).string();
  if (f.mock) cfg["mock"] = true;
  if (!f.mode.empty()) cfg["mode"] = f.mode;
  if (f.zoom_scale) cfg["zoom_scale"] = *f.zoom_scale;
  if (f.k) {
    if (!cfg.contains("knn") || !cfg["knn"].is_object()) cfg["knn"] = json::object();
    cfg["knn"]["k"] = *f.k;
  }
  if (f.seed) cfg["seed"] = *f.seed;
  if (f.analyze_reasoning) cfg["analyze_reasoning"] = true;
  return {cfg.dump(), dir};
}

int cmd_featurize(const Flags& f) {
  std::string name = f.name;
  if (name.empty()) name = fs::path(f.csv).stem().string();
  marvis_dataset* ds = nullptr;
  marvis_status s =
      marvis_featurize_csv(f.csv.c_str(), name.c_str(), f.query_fraction, f.seed.value_or(0), &ds);
  if (s != MARVIS_OK) return report_error(s);
  s = marvis_dataset_save(ds, f.manifest.c_str());
  const size_t n = marvis_dataset_num_samples(ds);
  const size_t d = marvis_dataset_dim(ds);
  marvis_dataset_free(ds);
  if (s != MARVIS_OK) return report_error(s);
  std::cout << "wrote " << f.manifest << " (" << n << " samples, " << d << " features)\n";
  return kExitOk;
}

int cmd_visualize(const Flags& f) {
  const ConfigText c = merged_config(f);
  size_t n = 0;
  const marvis_status s = marvis_run_visualize(c.json.c_str(), c.dir.c_str(), &n);
  if (s != MARVIS_OK) return report_error(s);
  std::cout << "wrote " << n << " visualizations\n";
  return kExitOk;
}

int cmd_evaluate(const Flags& f) {
  const ConfigText c = merged_config(f);
  marvis_report* report = nullptr;
  const marvis_status s = marvis_run_evaluate(c.json.c_str(), c.dir.c_str(), &report);
  if (report) {
    char* table = marvis_report_to_table(report);
    if (table) std::cout << table;
    marvis_string_free(table);
    marvis_report_free(report);
  }
  if (s != MARVIS_OK) return report_error(s);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Visual in-context classification and regression with vision-language models",
               "marvis"};
  app.fallthrough();
  app.require_subcommand(1);
  app.set_version_flag("--version", marvis_version());

  Flags f;
  app.add_option("--config", f.config, "JSON run configuration file");
  app.add_option("--dataset", f.dataset, "Dataset manifest (overrides the config)");
  app.add_flag("--mock", f.mock, "Use the offline mock backend instead of an endpoint");
  app.add_option("--mode", f.mode, "Context mode: basic_tsne or tsne_knn");
  app.add_option("--zoom-scale", f.zoom_scale, "Viewport zoom factor (>= 1)");
  app.add_option("--k", f.k, "Number of nearest neighbors");
  app.add_option("--seed", f.seed, "Random seed");
  app.add_option("--out", f.out, "Output directory (output manifest for featurize)");
  app.add_flag("--analyze-reasoning", f.analyze_reasoning,
               "Add response reasoning statistics to the report");

  auto* featurize = app.add_subcommand("featurize", "Featurize a typed CSV into a dataset manifest");
  featurize->add_option("csv", f.csv, "Input CSV with a #types: line")->required();
  featurize->add_option("manifest", f.manifest, "Output manifest path");
  featurize->add_option("--name", f.name, "Dataset name (defaults to the CSV stem)");
  featurize->add_option("--query-fraction", f.query_fraction,
                        "Fraction of each class held out as queries");

  app.add_subcommand("visualize", "Render per-query visualizations without querying a model");
  app.add_subcommand("evaluate", "Run the full pipeline and write an evaluation report");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitValidation;
  }

  try {
    if (featurize->parsed()) {
      if (f.manifest.empty()) f.manifest = f.out;
      if (f.manifest.empty()) {
        std::cerr << "marvis: error: featurize needs an output manifest path\n";
        return kExitValidation;
      }
      return cmd_featurize(f);
    }
    if (app.got_subcommand("visualize")) return cmd_visualize(f);
    return cmd_evaluate(f);
  } catch (const std::exception& e) {
    std::cerr << "marvis: error: " << e.what() << "\n";
    return kExitValidation;
  }
}
