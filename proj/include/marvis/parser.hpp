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
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "marvis/viz.hpp"

namespace marvis {

// Case-folds, trims, collapses runs of whitespace, underscores, hyphens and
// backslashes to one space, and strips surrounding quotes and periods.
std::string normalize_label(std::string_view s);

// Class-name <-> color-name correspondence known to the parser.
class ClassMap {
 public:
  ClassMap() = default;
  explicit ClassMap(std::vector<std::pair<std::string, std::string>> entries);
  static ClassMap from_color_map(const ColorMap& cmap);

  std::size_t size() const { return entries_.size(); }
  const std::string& class_name(std::size_t i) const { return entries_.at(i).first; }
  const std::string& color_name(std::size_t i) const { return entries_.at(i).second; }
  const std::string& class_key(std::size_t i) const { return class_keys_.at(i); }
  const std::string& color_key(std::size_t i) const { return color_keys_.at(i); }

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
  std::vector<std::string> class_keys_;
  std::vector<std::string> color_keys_;
};

enum class Channel { kSentinel, kClassName, kColorName, kNumber };

std::string to_string(Channel c);

struct Prediction {
  double value = 0.0;  // class index or numeric answer
  Channel channel = Channel::kSentinel;
  std::size_t span_begin = 0;  // byte range in raw_text
  std::size_t span_end = 0;
  std::string raw_text;

  int class_index() const { return static_cast<int>(value); }
};

// Priority: last "FINAL ANSWER:" whose payload names a class, then the last
// class-name mention, then the last color-name mention. Within a channel a
// mention contained in a longer one is ignored. Throws Error(kUnparseable).
Prediction parse_classification(std::string_view text, const ClassMap& cm);

// Last numeric "FINAL ANSWER:" payload, else the last standalone number.
// Throws Error(kUnparseable).
Prediction parse_regression(std::string_view text);

// JSON listing every candidate match per channel, for failed parses.
std::string classification_diagnostics(std::string_view text, const ClassMap& cm);

}  // namespace marvis
