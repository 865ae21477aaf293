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
#include <cctype>
#include <cmath>
#include <set>

#include "json.hpp"
#include "marvis/error.hpp"
#include "marvis/eval.hpp"

namespace marvis {

ClassificationMetrics classification_metrics(std::span<const int> truth,
                                             std::span<const int> pred,
                                             std::size_t n_classes) {
  if (truth.size() != pred.size()) {
    fail(ErrorCode::kInvalidArgument, "truth and prediction lengths differ");
  }
  if (truth.empty()) fail(ErrorCode::kInvalidArgument, "no predictions to score");
  auto in_range = [&](int c) { return c >= 0 && static_cast<std::size_t>(c) < n_classes; };

  std::vector<std::size_t> tp(n_classes, 0), fp(n_classes, 0), fn(n_classes, 0),
      support(n_classes, 0);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    if (!in_range(truth[i])) fail(ErrorCode::kInvalidArgument, "truth label out of range");
    const auto t = static_cast<std::size_t>(truth[i]);
    ++support[t];
    if (pred[i] == truth[i]) {
      ++correct;
      ++tp[t];
      continue;
    }
    ++fn[t];
    if (in_range(pred[i])) ++fp[static_cast<std::size_t>(pred[i])];
  }

  ClassificationMetrics m;
  m.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
  double recall_sum = 0.0;
  std::size_t recall_classes = 0;
  double f1_sum = 0.0;
  std::size_t f1_classes = 0;
  for (std::size_t c = 0; c < n_classes; ++c) {
    if (support[c] > 0) {
      recall_sum += static_cast<double>(tp[c]) / static_cast<double>(support[c]);
      ++recall_classes;
    }
    const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
    if (denom > 0) {
      f1_sum += 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
      ++f1_classes;
    }
  }
  m.balanced_accuracy = recall_sum / static_cast<double>(recall_classes);
  m.macro_f1 = f1_sum / static_cast<double>(f1_classes);
  return m;
}

RegressionMetrics regression_metrics(std::span<const double> truth,
                                     std::span<const double> pred) {
  if (truth.size() != pred.size()) {
    fail(ErrorCode::kInvalidArgument, "truth and prediction lengths differ");
  }
  if (truth.size() < 2) fail(ErrorCode::kInvalidArgument, "regression metrics need n >= 2");
  const double n = static_cast<double>(truth.size());
  double mean = 0.0;
  for (double t : truth) mean += t;
  mean /= n;
  double ss_res = 0.0, ss_tot = 0.0, abs_sum = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const double e = truth[i] - pred[i];
    ss_res += e * e;
    abs_sum += std::abs(e);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  RegressionMetrics m;
  m.mae = abs_sum / n;
  m.rmse = std::sqrt(ss_res / n);
  if (ss_tot > 0.0) {
    m.r2_raw = 1.0 - ss_res / ss_tot;
    m.r2 = std::max(0.0, *m.r2_raw);
  }
  return m;
}

double ci95(double p, std::size_t n) {
  if (!(p >= 0.0 && p <= 1.0)) fail(ErrorCode::kInvalidArgument, "proportion outside [0, 1]");
  if (n < 1) fail(ErrorCode::kInvalidArgument, "ci95 needs n >= 1");
  return 1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

// ---------------------------------------------------------------------------

namespace {

bool word_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

std::size_t count_words(std::string_view text) {
  std::size_t words = 0;
  bool in_word = false;
  for (char ch : text) {
    const bool space = std::isspace(static_cast<unsigned char>(ch));
    if (!space && !in_word) ++words;
    in_word = !space;
  }
  return words;
}

ReasoningGroupStats summarize(const std::vector<const ReasoningRecord*>& group,
                              std::span<const std::string> palette) {
  ReasoningGroupStats s;
  s.responses = group.size();
  if (group.empty()) return s;
  for (const auto* r : group) {
    s.mean_chars += static_cast<double>(r->text.size());
    s.mean_words += static_cast<double>(count_words(r->text));
    for (const auto& color : palette) {
      s.mean_color_mentions += static_cast<double>(count_term(r->text, color));
    }
    s.distance_rate += static_cast<double>(count_term(r->text, "distance") +
                                           count_term(r->text, "distances"));
    s.closest_rate += static_cast<double>(count_term(r->text, "closest"));
    s.majority_rate += static_cast<double>(count_term(r->text, "majority"));
    s.cluster_rate += static_cast<double>(count_term(r->text, "cluster"));
  }
  const double n = static_cast<double>(group.size());
  for (double* v : {&s.mean_chars, &s.mean_words, &s.mean_color_mentions, &s.distance_rate,
                    &s.closest_rate, &s.majority_rate, &s.cluster_rate}) {
    *v /= n;
  }
  return s;
}

nlohmann::json group_json(const ReasoningGroupStats& s) {
  return {{"responses", s.responses},
          {"mean_chars", s.mean_chars},
          {"mean_words", s.mean_words},
          {"mean_color_mentions", s.mean_color_mentions},
          {"distance_rate", s.distance_rate},
          {"closest_rate", s.closest_rate},
          {"majority_rate", s.majority_rate},
          {"cluster_rate", s.cluster_rate}};
}

}  // namespace

std::size_t count_term(std::string_view text, std::string_view term) {
  if (term.empty()) return 0;
  std::string hay(text);
  std::string needle(term);
  for (auto& c : hay) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (auto& c : needle) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  std::size_t count = 0;
  for (std::size_t pos = hay.find(needle); pos != std::string::npos;
       pos = hay.find(needle, pos + 1)) {
    const std::size_t end = pos + needle.size();
    const bool left = pos == 0 || !word_byte(static_cast<unsigned char>(hay[pos - 1]));
    const bool right = end == hay.size() || !word_byte(static_cast<unsigned char>(hay[end]));
    if (left && right) ++count;
  }
  return count;
}

ReasoningStats analyze_reasoning(std::span<const ReasoningRecord> records,
                                 std::span<const std::string> palette) {
  std::vector<std::string> names;
  if (palette.empty()) {
    for (const auto& c : named_palette()) names.push_back(c.name);
    palette = names;
  }
  std::vector<const ReasoningRecord*> all, correct, incorrect;
  for (const auto& r : records) {
    all.push_back(&r);
    (r.correct ? correct : incorrect).push_back(&r);
  }
  return {summarize(all, palette), summarize(correct, palette), summarize(incorrect, palette)};
}

std::string ReasoningStats::to_json() const {
  return nlohmann::json{{"overall", group_json(overall)},
                        {"correct", group_json(correct)},
                        {"incorrect", group_json(incorrect)}}
      .dump();
}

}  // namespace marvis
