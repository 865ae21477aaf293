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

#include "doctest.h"
#include "json.hpp"
#include "marvis/error.hpp"
#include "marvis/parser.hpp"
#include "support.hpp"

using namespace marvis;
using namespace marvis::testing;
using nlohmann::json;

namespace {

ClassMap map_of(const json& pairs) {
  std::vector<std::pair<std::string, std::string>> v;
  for (const auto& p : pairs) v.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
  return ClassMap(std::move(v));
}

std::optional<std::string> parsed_name(const std::string& text, const ClassMap& cm,
                                       Channel* channel = nullptr) {
  try {
    const Prediction p = parse_classification(text, cm);
    if (channel) *channel = p.channel;
    CHECK(p.span_begin <= p.span_end);
    CHECK(p.span_end <= text.size());
    return cm.class_name(static_cast<std::size_t>(p.class_index()));
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnparseable);
    return std::nullopt;
  }
}

}  // namespace

TEST_CASE("normalize_label examples") {
  CHECK(normalize_label("Class\\_2.") == "class 2");
  CHECK(normalize_label("'Long-term methods'") == "long term methods");
  CHECK(normalize_label("  CAT ") == "cat");
  CHECK(normalize_label("a__b--c  d") == "a b c d");
  CHECK(normalize_label("\"Quoted\"") == "quoted");
}

TEST_CASE("ClassMap rejects colliding keys") {
  CHECK_THROWS_AS(ClassMap({{"Class_1", "blue"}, {"class 1", "green"}}), Error);
  CHECK_THROWS_AS(ClassMap({{"a", "blue"}, {"b", "Blue"}}), Error);
  CHECK_THROWS_AS(parse_classification("x", ClassMap()), Error);
}

TEST_CASE("fixture corpus: every entry extracted, traps unparseable") {
  const json corpus = json::parse(read_file(MARVIS_FIXTURE_DIR "/parser_corpus.json"));
  std::size_t mutations = 0, quoted = 0;
  for (const auto& e : corpus["entries"]) {
    const std::string text = e["text"];
    CAPTURE(text);
    const ClassMap cm = map_of(e["classes"]);
    Channel ch{};
    const auto got = parsed_name(text, cm, &ch);
    if (e["expected"].is_null()) {
      CHECK_FALSE(got.has_value());
      continue;
    }
    REQUIRE(got.has_value());
    CHECK(*got == e["expected"].get<std::string>());
    if (e["channel"].is_string()) CHECK(to_string(ch) == e["channel"].get<std::string>());
    mutations += e["tag"] == "mutation";
    quoted += e["tag"] == "quoted";
  }
  CHECK(quoted == 2);
  CHECK(mutations >= 20);
}

TEST_CASE("unparseable errors carry a diagnostic") {
  const ClassMap cm({{"cat", "blue"}, {"dog", "green"}});
  try {
    parse_classification("FINAL ANSWER: horse", cm);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("unparseable") != std::string::npos);
    CHECK(std::string(e.what()).find("horse") != std::string::npos);
  }
  const json d = json::parse(classification_diagnostics("blue cat, FINAL ANSWER: dog", cm));
  CHECK(d["sentinels"] == json::array({"dog"}));
  REQUIRE(d["class_mentions"].size() == 2);
  CHECK(d["class_mentions"][0]["class"] == "cat");
  CHECK(d["class_mentions"][1]["class"] == "dog");
  REQUIRE(d["color_mentions"].size() == 1);
  CHECK(d["color_mentions"][0]["class"] == "cat");
  CHECK(d["color_mentions"][0]["begin"] == 0);
  CHECK(d["color_mentions"][0]["end"] == 4);
}

TEST_CASE("a trailing sentinel overrides earlier mentions") {
  Rng rng(23);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t n = 2 + rng.below(10);
    std::vector<std::pair<std::string, std::string>> pairs;
    for (std::size_t i = 0; i < n; ++i) {
      pairs.emplace_back("Class_" + std::to_string(i), named_palette()[i].name);
    }
    const ClassMap cm(pairs);
    std::string text = "Looking at the plot.";
    for (std::size_t w = 0; w < 1 + rng.below(8); ++w) {
      const auto& p = pairs[rng.below(n)];
      text += rng.below(2) ? " Near the " + p.second + " points." : " Maybe " + p.first + ".";
    }
    const std::size_t target = rng.below(n);
    text += " FINAL ANSWER: " + pairs[target].first;
    const Prediction pred = parse_classification(text, cm);
    CHECK(pred.class_index() == static_cast<int>(target));
    CHECK(pred.channel == Channel::kSentinel);
  }
}

TEST_CASE("longest match within a channel") {
  const ClassMap cm({{"Class_1", "blue"}, {"Class_10", "green"}, {"Class_11", "orange"}});
  for (const char* t : {"Class_10", "class 10.", "It is CLASS-10", "FINAL ANSWER: Class_10"}) {
    CAPTURE(t);
    CHECK(parsed_name(t, cm) == std::optional<std::string>("Class_10"));
  }
  const ClassMap colors({{"x", "blue"}, {"y", "navy blue"}});
  CHECK(parsed_name("the navy blue points", colors) == std::optional<std::string>("y"));
}

TEST_CASE("regression parsing") {
  CHECK(parse_regression("roughly 40–60; FINAL ANSWER: 52.5").value == 52.5);
  CHECK(parse_regression("the value is about 3e2").value == 300.0);
  CHECK(parse_regression("FINAL ANSWER: -0.25").value == -0.25);
  CHECK(parse_regression("FINAL ANSWER: 1.5E-3").value == 1.5e-3);
  CHECK(parse_regression("values near x2 and y3 average 7").value == 7.0);
  CHECK(parse_regression("between 40 and 60").value == 60.0);
  CHECK(parse_regression("FINAL ANSWER: 12 (units), maybe 13 later").value == 12.0);
  CHECK(parse_regression("FINAL ANSWER: 3\nFINAL ANSWER: 4").value == 4.0);
  CHECK(parse_regression("FINAL ANSWER: about -7.").value == -7.0);
  try {
    parse_regression("no idea");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kUnparseable);
    CHECK(std::string(e.what()).find("unparseable") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_regression("model v2 says abc3"), Error);
}

TEST_CASE("regression parsing round-trips printed numbers") {
  Rng rng(31);
  for (int i = 0; i < 500; ++i) {
    const double v = rng.normal() * std::pow(10.0, static_cast<double>(rng.below(12)) - 6.0);
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    CHECK(parse_regression(std::string("Estimate. FINAL ANSWER: ") + buf).value == v);
    CHECK(parse_regression(std::string("I think it is ") + buf + " overall").value == v);
  }
}
