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
#include <sstream>

#include "marvis/error.hpp"
#include "marvis/vlm.hpp"

namespace marvis {

std::string to_string(PromptMode mode) {
  return mode == PromptMode::kBasicTsne ? "basic_tsne" : "tsne_knn";
}

PromptMode parse_prompt_mode(const std::string& s) {
  if (s == "basic_tsne") return PromptMode::kBasicTsne;
  if (s == "tsne_knn") return PromptMode::kTsneKnn;
  fail(ErrorCode::kValidation, "unknown mode \"" + s + "\" (basic_tsne or tsne_knn)");
}

namespace {

std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

std::string shortest(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

constexpr const char* kDefaultSystem =
    "You are an expert analyst of scatter plots. You classify or estimate values for a "
    "query point using its position relative to labeled training points.";

}  // namespace

PromptBundle build_prompt(const RenderResult& viz, const NeighborSet* ns, const ColorMap* cmap,
                          const std::optional<std::string>& metadata, PromptMode mode,
                          TaskKind task, const PromptOptions& opts) {
  if (mode == PromptMode::kTsneKnn && (ns == nullptr || ns->empty())) {
    fail(ErrorCode::kInvalidArgument, "tsne_knn mode requires a neighbor set");
  }
  if (mode == PromptMode::kTsneKnn && task == TaskKind::kClassification && cmap == nullptr) {
    fail(ErrorCode::kInvalidArgument, "tsne_knn classification prompts need a color map");
  }
  const bool classification = task == TaskKind::kClassification;

  PromptBundle p;
  p.mode = mode;
  p.task = task;
  p.image = viz.png;
  p.system_text = opts.system_text.value_or(kDefaultSystem);
  for (const auto& e : viz.legend) p.classmap.emplace_back(e.label, e.color_name);

  std::ostringstream u;
  u << "The image is a t-SNE visualization of embedded training data. Each colored dot is "
       "a training sample and the red star marks the query point.";
  if (classification) {
    u << " Dot colors encode the class.\n\n";
    u << "Legend (class (color)):\n";
  } else {
    u << " Dot colors encode the target value range.\n\n";
    u << "Legend (value range (color)):\n";
  }
  for (const auto& e : viz.legend) u << "– " << e.text() << "\n";

  if (mode == PromptMode::kTsneKnn) {
    u << "\nThe " << ns->size()
      << " nearest training samples to the query in the original embedding space:\n";
    u << "Nearest neighbors:\n";
    for (std::size_t r = 0; r < ns->size(); ++r) {
      const auto& nb = ns->neighbors[r];
      u << (r + 1) << ". ";
      if (classification) {
        const auto cls = static_cast<std::size_t>(*nb.label);
        u << cmap->class_name(cls) << " (" << cmap->color(cls).name << ")";
      } else {
        u << "value " << shortest(*nb.label);
      }
      u << ", distance " << fixed(nb.distance, opts.distance_decimals) << "\n";
    }
    if (classification) {
      u << "\nNeighbor summary by class:\n";
      for (const auto& [cls, st] : ns->per_class_stats) {
        const auto idx = static_cast<std::size_t>(cls);
        u << "- " << cmap->class_name(idx) << " (" << cmap->color(idx).name
          << "): " << st.count << (st.count == 1 ? " neighbor" : " neighbors")
          << ", mean distance " << fixed(st.mean_distance, opts.distance_decimals) << "\n";
      }
    }
  }
  if (metadata && !metadata->empty()) u << "\n" << *metadata << "\n";

  if (classification) {
    u << "\nWhich class does the query point belong to? Reason briefly about where the red "
         "star sits relative to the colored points, then give exactly one class name from "
         "the legend on the final line in the form:\n"
      << kSentinel << " <class name>\n";
  } else {
    u << "\nWhat is the target value of the query point? Reason briefly about the values "
         "of the training points around the red star, then give a single number on the "
         "final line in the form:\n"
      << kSentinel << " <number>\n";
  }
  p.user_text = u.str();
  return p;
}

RawResponse mock_vlm_respond(const PromptBundle& p, const NeighborSet& ns,
                             const ColorMap* cmap) {
  const KnnPrediction pred = knn_predict(ns, p.task);
  RawResponse r;
  r.request_id = "mock";
  if (p.task == TaskKind::kRegression) {
    r.text = "The red star (query point) lies among training points with values near " +
             fixed(pred.value, 2) + ". " + std::string(kSentinel) + " " + shortest(pred.value);
    return r;
  }
  if (cmap == nullptr) fail(ErrorCode::kInvalidArgument, "mock classification needs a color map");
  const auto cls = static_cast<std::size_t>(pred.class_index());
  const std::string& name = cmap->class_name(cls);
  r.text = "The red star (query point) is closest to the " + cmap->color(cls).name +
           "-colored training points, which are associated with " + name + ". " +
           std::string(kSentinel) + " " + name;
  return r;
}

}  // namespace marvis
