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

#include "marvis/config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"
#include "marvis/error.hpp"

namespace marvis {

using nlohmann::json;

namespace {

using Handler = std::function<void(const json&)>;

// Applies one handler per key; unknown keys are rejected so typos surface.
void dispatch(const json& obj, const std::string& where, const std::map<std::string, Handler>& h) {
  if (!obj.is_object()) fail(ErrorCode::kValidation, where + " must be a JSON object");
  for (const auto& [key, value] : obj.items()) {
    const auto it = h.find(key);
    if (it == h.end()) fail(ErrorCode::kValidation, "unknown key \"" + key + "\" in " + where);
    try {
      it->second(value);
    } catch (const json::exception&) {
      fail(ErrorCode::kValidation, "bad value for \"" + key + "\" in " + where);
    }
  }
}

template <typename T>
Handler set(T& field) {
  return [&field](const json& v) { field = v.get<T>(); };
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  const std::filesystem::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

LegendPosition parse_legend(const std::string& s) {
  if (s == "right") return LegendPosition::kRight;
  if (s == "bottom") return LegendPosition::kBottom;
  fail(ErrorCode::kValidation, "legend must be \"right\" or \"bottom\"");
}

}  // namespace

RunConfig parse_run_config(const std::string& text, const std::filesystem::path& base_dir) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorCode::kValidation, std::string("config is not valid JSON: ") + e.what());
  }
  RunConfig cfg;
  auto& pc = cfg.pipeline;
  auto& t = pc.tsne;
  auto& r = pc.render;
  auto& ep = cfg.endpoint;
  try {
    dispatch(root, "config", {
      {"dataset", [&](const json& v) { cfg.dataset = resolve(base_dir, v.get<std::string>()); }},
      {"out", [&](const json& v) { cfg.out = resolve(base_dir, v.get<std::string>()); }},
      {"mock", set(cfg.mock)},
      {"seed", set(cfg.seed)},
      {"artifacts", set(cfg.artifacts)},
      {"mode", [&](const json& v) { pc.mode = parse_prompt_mode(v.get<std::string>()); }},
      {"zoom_scale", set(pc.zoom_scale)},
      {"margin_fraction", set(pc.margin_fraction)},
      {"include_metadata", set(pc.include_metadata)},
      {"analyze_reasoning", set(pc.analyze_reasoning)},
      {"tsne", [&](const json& v) {
         dispatch(v, "tsne", {{"perplexity", set(t.perplexity)},
                              {"iterations", set(t.iterations)},
                              {"learning_rate", set(t.learning_rate)},
                              {"early_exaggeration", set(t.early_exaggeration)},
                              {"early_exaggeration_iters", set(t.early_exaggeration_iters)},
                              {"momentum", set(t.momentum)},
                              {"final_momentum", set(t.final_momentum)}});
       }},
      {"knn", [&](const json& v) {
         dispatch(v, "knn", {
           {"k", [&](const json& x) {
              if (x.is_null()) return pc.k.reset();
              if (!x.is_number_integer() || x.get<long long>() < 1) {
                fail(ErrorCode::kValidation, "knn.k must be a positive integer");
              }
              pc.k = x.get<std::size_t>();
            }},
           {"metric", [&](const json& x) { pc.knn_metric = parse_metric(x.get<std::string>()); }}});
       }},
      {"render", [&](const json& v) {
         dispatch(v, "render", {
           {"width", set(r.width)},
           {"height", set(r.height)},
           {"point_radius", set(r.point_radius)},
           {"legend", [&](const json& x) { r.legend_position = parse_legend(x.get<std::string>()); }},
           {"title", set(r.title)}});
       }},
      {"layout", [&](const json& v) {
         dispatch(v, "layout", {
           {"strategy", [&](const json& x) { pc.layout = parse_layout_strategy(x.get<std::string>()); }},
           {"max_points", set(pc.max_layout_points)}});
       }},
      {"prompt", [&](const json& v) {
         dispatch(v, "prompt", {
           {"distance_decimals", set(pc.prompt.distance_decimals)},
           {"system_text", [&](const json& x) { pc.prompt.system_text = x.get<std::string>(); }}});
       }},
      {"endpoint", [&](const json& v) {
         dispatch(v, "endpoint", {{"base_url", set(ep.base_url)},
                                  {"model", set(ep.model)},
                                  {"token_env", set(ep.token_env)},
                                  {"timeout_seconds", set(ep.timeout_seconds)},
                                  {"max_retries", set(ep.max_retries)},
                                  {"backoff_base_seconds", set(ep.backoff_base_seconds)},
                                  {"max_concurrency", set(ep.max_concurrency)},
                                  {"temperature", set(ep.temperature)},
                                  {"max_image_bytes", set(ep.max_image_bytes)}});
       }},
    });
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kValidation) throw;
    fail(ErrorCode::kValidation, e.what());
  }
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kValidation, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.parent_path());
}

PipelineConfig RunConfig::effective_pipeline() const {
  PipelineConfig pc = pipeline;
  pc.tsne.seed = seed;
  return pc;
}

void RunConfig::validate() const {
  if (dataset.empty()) fail(ErrorCode::kValidation, "no dataset manifest given");
  if (!std::filesystem::is_regular_file(dataset)) {
    fail(ErrorCode::kValidation, "dataset manifest not found: " + dataset.string());
  }
  if (out.empty()) fail(ErrorCode::kValidation, "no output directory given");
  effective_pipeline().validate();
  if (!mock) {
    try {
      endpoint.validate();
    } catch (const Error& e) {
      fail(ErrorCode::kValidation, e.what());
    }
  }
}

std::string RunConfig::to_json() const {
  const auto& pc = pipeline;
  const auto& t = pc.tsne;
  const auto& r = pc.render;
  json j;
  j["dataset"] = dataset.string();
  j["out"] = out.string();
  j["mock"] = mock;
  j["seed"] = seed;
  j["artifacts"] = artifacts;
  j["mode"] = to_string(pc.mode);
  j["zoom_scale"] = pc.zoom_scale;
  j["margin_fraction"] = pc.margin_fraction;
  j["include_metadata"] = pc.include_metadata;
  j["analyze_reasoning"] = pc.analyze_reasoning;
  j["tsne"] = {{"perplexity", t.perplexity},
               {"iterations", t.iterations},
               {"learning_rate", t.learning_rate},
               {"early_exaggeration", t.early_exaggeration},
               {"early_exaggeration_iters", t.early_exaggeration_iters},
               {"momentum", t.momentum},
               {"final_momentum", t.final_momentum}};
  j["knn"] = {{"k", pc.k ? json(*pc.k) : json()},
              {"metric", pc.knn_metric ? json(to_string(*pc.knn_metric)) : json()}};
  j["render"] = {{"width", r.width},
                 {"height", r.height},
                 {"point_radius", r.point_radius},
                 {"legend", r.legend_position == LegendPosition::kRight ? "right" : "bottom"},
                 {"title", r.title}};
  j["layout"] = {{"strategy", to_string(pc.layout)}, {"max_points", pc.max_layout_points}};
  j["prompt"] = {{"distance_decimals", pc.prompt.distance_decimals}};
  if (pc.prompt.system_text) j["prompt"]["system_text"] = *pc.prompt.system_text;
  j["endpoint"] = {{"base_url", endpoint.base_url},
                   {"model", endpoint.model},
                   {"token_env", endpoint.token_env},
                   {"timeout_seconds", endpoint.timeout_seconds},
                   {"max_retries", endpoint.max_retries},
                   {"backoff_base_seconds", endpoint.backoff_base_seconds},
                   {"max_concurrency", endpoint.max_concurrency},
                   {"temperature", endpoint.temperature},
                   {"max_image_bytes", endpoint.max_image_bytes}};
  return j.dump(2);
}

}  // namespace marvis
