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

#include "marvis/parser.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <optional>
#include <set>

#include "json.hpp"
#include "marvis/error.hpp"

namespace marvis {

std::string to_string(Channel c) {
  switch (c) {
    case Channel::kSentinel: return "sentinel";
    case Channel::kClassName: return "classname";
    case Channel::kColorName: return "colorname";
    case Channel::kNumber: return "number";
  }
  return "unknown";
}

namespace {

bool is_separator(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v' ||
         c == '_' || c == '-' || c == '\\';
}

bool is_word_byte(char c) {
  const auto u = static_cast<unsigned char>(c);
  return (u >= '0' && u <= '9') || (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z') ||
         u >= 0x80;
}

char fold(char c) { return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c; }

bool is_strippable(char c) {
  return c == '\'' || c == '"' || c == '`' || c == '.' || c == '*' || c == ',' ||
         c == ':' || c == ';' || c == '!' || c == '?';
}

// Curly quotes are three-byte UTF-8 sequences E2 80 {98,99,9C,9D}.
std::size_t curly_quote_at(std::string_view s, std::size_t i) {
  if (i + 3 <= s.size() && static_cast<unsigned char>(s[i]) == 0xE2 &&
      static_cast<unsigned char>(s[i + 1]) == 0x80) {
    const auto c = static_cast<unsigned char>(s[i + 2]);
    if (c == 0x98 || c == 0x99 || c == 0x9C || c == 0x9D) return 3;
  }
  return 0;
}

std::string strip_surrounding(std::string s) {
  bool changed = true;
  while (changed && !s.empty()) {
    changed = false;
    if (is_strippable(s.front()) || s.front() == ' ') {
      s.erase(0, 1);
      changed = true;
    } else if (std::size_t q = curly_quote_at(s, 0)) {
      s.erase(0, q);
      changed = true;
    }
    if (s.empty()) break;
    if (is_strippable(s.back()) || s.back() == ' ') {
      s.pop_back();
      changed = true;
    } else if (s.size() >= 3 && curly_quote_at(s, s.size() - 3)) {
      s.erase(s.size() - 3);
      changed = true;
    }
  }
  return s;
}

// Normalized text with a map back to raw byte offsets. Separator runs become
// one space, or one newline when the run contains a line break.
struct NormText {
  std::string s;
  std::vector<std::size_t> origin;

  std::pair<std::size_t, std::size_t> raw_span(std::size_t b, std::size_t e) const {
    return {origin[b], origin[e - 1] + 1};
  }
};

NormText normalize_text(std::string_view raw) {
  NormText out;
  std::size_t i = 0;
  while (i < raw.size()) {
    if (is_separator(raw[i])) {
      const std::size_t start = i;
      bool newline = false;
      while (i < raw.size() && is_separator(raw[i])) {
        if (raw[i] == '\n') newline = true;
        ++i;
      }
      out.s.push_back(newline ? '\n' : ' ');
      out.origin.push_back(start);
    } else {
      out.s.push_back(fold(raw[i]));
      out.origin.push_back(i);
      ++i;
    }
  }
  return out;
}

struct Mention {
  std::size_t begin = 0;  // normalized offsets
  std::size_t end = 0;
  std::size_t entry = 0;
};

void find_mentions(const std::string& hay, const std::string& key, std::size_t entry,
                   std::size_t lo, std::size_t hi, std::vector<Mention>& out) {
  if (key.empty()) return;
  const bool need_left = is_word_byte(key.front());
  const bool need_right = is_word_byte(key.back());
  std::size_t pos = hay.find(key, lo);
  while (pos != std::string::npos && pos + key.size() <= hi) {
    const std::size_t end = pos + key.size();
    const bool left_ok = !need_left || pos == 0 || !is_word_byte(hay[pos - 1]);
    const bool right_ok = !need_right || end == hay.size() || !is_word_byte(hay[end]);
    if (left_ok && right_ok) out.push_back({pos, end, entry});
    pos = hay.find(key, pos + 1);
  }
}

// Drops mentions strictly contained in a longer mention.
std::vector<Mention> maximal(const std::vector<Mention>& all) {
  std::vector<Mention> out;
  for (const auto& m : all) {
    const bool contained = std::any_of(all.begin(), all.end(), [&](const Mention& o) {
      return o.begin <= m.begin && m.end <= o.end && (o.end - o.begin) > (m.end - m.begin);
    });
    if (!contained) out.push_back(m);
  }
  return out;
}

std::vector<Mention> mentions_of(const NormText& t, const std::vector<std::string>& keys,
                                 std::size_t lo, std::size_t hi) {
  std::vector<Mention> all;
  for (std::size_t k = 0; k < keys.size(); ++k) find_mentions(t.s, keys[k], k, lo, hi, all);
  return maximal(all);
}

const Mention* last_of(const std::vector<Mention>& ms) {
  const Mention* best = nullptr;
  for (const auto& m : ms) {
    if (!best || m.begin > best->begin) best = &m;
  }
  return best;
}

struct SentinelHit {
  std::size_t payload_begin = 0;  // normalized offsets
  std::size_t payload_end = 0;
};

// "final answer" [spaces/asterisks] ":" [spaces/asterisks] payload-to-eol
std::vector<SentinelHit> find_sentinels(const std::string& s) {
  static const std::string kKey = "final answer";
  std::vector<SentinelHit> out;
  std::size_t pos = s.find(kKey);
  while (pos != std::string::npos) {
    std::size_t i = pos + kKey.size();
    while (i < s.size() && (s[i] == ' ' || s[i] == '*')) ++i;
    if (i < s.size() && s[i] == ':') {
      ++i;
      while (i < s.size() && (s[i] == ' ' || s[i] == '*')) ++i;
      std::size_t e = i;
      while (e < s.size() && s[e] != '\n') ++e;
      out.push_back({i, e});
    }
    pos = s.find(kKey, pos + 1);
  }
  return out;
}

std::vector<std::string> class_keys(const ClassMap& cm) {
  std::vector<std::string> k;
  for (std::size_t i = 0; i < cm.size(); ++i) k.push_back(cm.class_key(i));
  return k;
}

std::vector<std::string> color_keys(const ClassMap& cm) {
  std::vector<std::string> k;
  for (std::size_t i = 0; i < cm.size(); ++i) k.push_back(cm.color_key(i));
  return k;
}

}  // namespace

std::string normalize_label(std::string_view s) {
  std::string out;
  bool pending = false;
  for (char c : s) {
    if (is_separator(c)) {
      pending = true;
      continue;
    }
    if (pending && !out.empty()) out.push_back(' ');
    pending = false;
    out.push_back(fold(c));
  }
  return strip_surrounding(std::move(out));
}

ClassMap::ClassMap(std::vector<std::pair<std::string, std::string>> entries)
    : entries_(std::move(entries)) {
  std::set<std::string> classes;
  std::set<std::string> colors;
  for (const auto& [name, color] : entries_) {
    class_keys_.push_back(normalize_label(name));
    color_keys_.push_back(normalize_label(color));
    if (class_keys_.back().empty()) {
      fail(ErrorCode::kInvalidArgument, "class name \"" + name + "\" normalizes to nothing");
    }
    if (!classes.insert(class_keys_.back()).second) {
      fail(ErrorCode::kInvalidArgument, "class names collide after normalization: " + name);
    }
    if (!colors.insert(color_keys_.back()).second) {
      fail(ErrorCode::kInvalidArgument, "color names collide after normalization: " + color);
    }
  }
}

ClassMap ClassMap::from_color_map(const ColorMap& cmap) {
  std::vector<std::pair<std::string, std::string>> entries;
  for (std::size_t i = 0; i < cmap.size(); ++i) {
    entries.emplace_back(cmap.class_name(i), cmap.color(i).name);
  }
  return ClassMap(std::move(entries));
}

Prediction parse_classification(std::string_view text, const ClassMap& cm) {
  if (cm.size() == 0) fail(ErrorCode::kInvalidArgument, "empty class map");
  const NormText t = normalize_text(text);
  const auto ckeys = class_keys(cm);

  Prediction p;
  p.raw_text = std::string(text);
  auto finish = [&](std::size_t entry, Channel ch, std::size_t b, std::size_t e) {
    p.value = static_cast<double>(entry);
    p.channel = ch;
    std::tie(p.span_begin, p.span_end) = t.raw_span(b, e);
    return p;
  };

  const auto sentinels = find_sentinels(t.s);
  std::string rejected_payload;
  for (auto it = sentinels.rbegin(); it != sentinels.rend(); ++it) {
    if (it->payload_end <= it->payload_begin) continue;
    const std::string payload =
        normalize_label(std::string_view(t.s).substr(it->payload_begin,
                                                     it->payload_end - it->payload_begin));
    for (std::size_t k = 0; k < ckeys.size(); ++k) {
      if (payload == ckeys[k]) {
        return finish(k, Channel::kSentinel, it->payload_begin, it->payload_end);
      }
    }
    const auto inside = mentions_of(t, ckeys, it->payload_begin, it->payload_end);
    if (!inside.empty()) {
      const auto first = std::min_element(inside.begin(), inside.end(),
                                          [](const Mention& a, const Mention& b) {
                                            return a.begin < b.begin;
                                          });
      return finish(first->entry, Channel::kSentinel, first->begin, first->end);
    }
    if (rejected_payload.empty()) rejected_payload = payload;
  }

  const auto by_class = mentions_of(t, ckeys, 0, t.s.size());
  if (const Mention* m = last_of(by_class)) {
    return finish(m->entry, Channel::kClassName, m->begin, m->end);
  }
  const auto by_color = mentions_of(t, color_keys(cm), 0, t.s.size());
  if (const Mention* m = last_of(by_color)) {
    return finish(m->entry, Channel::kColorName, m->begin, m->end);
  }
  std::string msg = "unparseable: no class or color name found";
  if (!sentinels.empty()) {
    msg += "; sentinel payload \"" + rejected_payload + "\" matches no class";
  }
  fail(ErrorCode::kUnparseable, msg);
}

std::string classification_diagnostics(std::string_view text, const ClassMap& cm) {
  const NormText t = normalize_text(text);
  nlohmann::json j;
  j["sentinels"] = nlohmann::json::array();
  for (const auto& s : find_sentinels(t.s)) {
    j["sentinels"].push_back(normalize_label(
        std::string_view(t.s).substr(s.payload_begin, s.payload_end - s.payload_begin)));
  }
  auto dump = [&](const std::vector<Mention>& ms, bool color) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& m : ms) {
      const auto [b, e] = t.raw_span(m.begin, m.end);
      arr.push_back({{"class", cm.class_name(m.entry)},
                     {"match", color ? cm.color_name(m.entry) : cm.class_name(m.entry)},
                     {"begin", b},
                     {"end", e}});
    }
    return arr;
  };
  j["class_mentions"] = dump(mentions_of(t, class_keys(cm), 0, t.s.size()), false);
  j["color_mentions"] = dump(mentions_of(t, color_keys(cm), 0, t.s.size()), true);
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Numbers

namespace {

struct NumberHit {
  double value = 0.0;
  std::size_t begin = 0;
  std::size_t end = 0;
};

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_ident(char c) { return is_word_byte(c) || c == '_'; }

// Standalone decimal numbers in [lo, hi): not glued to identifier characters.
// A sign counts only when it does not follow a word ("40-60" yields 40, 60).
std::vector<NumberHit> scan_numbers(std::string_view s, std::size_t lo, std::size_t hi) {
  std::vector<NumberHit> out;
  std::size_t i = lo;
  while (i < hi) {
    std::size_t start = i;
    std::size_t j = i;
    const bool signed_start = (s[j] == '-' || s[j] == '+') && (j == 0 || !is_ident(s[j - 1]));
    if (signed_start) ++j;
    const bool digit_start =
        j < hi && (is_digit(s[j]) || (s[j] == '.' && j + 1 < hi && is_digit(s[j + 1])));
    if (!digit_start) {
      ++i;
      continue;
    }
    if (!signed_start) start = j;
    std::size_t k = j;
    while (k < hi && is_digit(s[k])) ++k;
    if (k < hi && s[k] == '.' && k + 1 < hi && is_digit(s[k + 1])) {
      ++k;
      while (k < hi && is_digit(s[k])) ++k;
    }
    if (k < hi && (s[k] == 'e' || s[k] == 'E')) {
      std::size_t e = k + 1;
      if (e < hi && (s[e] == '+' || s[e] == '-')) ++e;
      if (e < hi && is_digit(s[e])) {
        while (e < hi && is_digit(s[e])) ++e;
        k = e;
      }
    }
    const bool glued_left = start > 0 && (is_ident(s[start - 1]) || s[start - 1] == '.');
    const bool glued_right = k < hi && is_ident(s[k]);
    if (!glued_left && !glued_right) {
      double v = 0.0;
      const char* first = s.data() + start;
      if (*first == '+') ++first;
      const auto [ptr, ec] = std::from_chars(first, s.data() + k, v);
      if (ec == std::errc() && ptr == s.data() + k && std::isfinite(v)) {
        out.push_back({v, start, k});
      }
    }
    // Skip the rest of the token so digits inside identifiers are not picked
    // up piecewise.
    while (k < hi && (is_ident(s[k]) || s[k] == '.')) ++k;
    i = std::max(k, i + 1);
  }
  return out;
}

}  // namespace

Prediction parse_regression(std::string_view text) {
  std::string folded(text);
  for (auto& c : folded) c = fold(c);
  Prediction p;
  p.raw_text = std::string(text);

  static const std::string kKey = "final answer";
  std::vector<std::size_t> sentinels;
  for (std::size_t pos = folded.find(kKey); pos != std::string::npos;
       pos = folded.find(kKey, pos + 1)) {
    sentinels.push_back(pos);
  }
  for (auto it = sentinels.rbegin(); it != sentinels.rend(); ++it) {
    std::size_t i = *it + kKey.size();
    while (i < folded.size() && (folded[i] == ' ' || folded[i] == '*')) ++i;
    if (i >= folded.size() || folded[i] != ':') continue;
    ++i;
    std::size_t e = i;
    while (e < folded.size() && folded[e] != '\n') ++e;
    const auto hits = scan_numbers(text, i, e);
    if (!hits.empty()) {
      p.value = hits.front().value;
      p.channel = Channel::kSentinel;
      p.span_begin = hits.front().begin;
      p.span_end = hits.front().end;
      return p;
    }
  }
  const auto hits = scan_numbers(text, 0, text.size());
  if (hits.empty()) fail(ErrorCode::kUnparseable, "unparseable: no number found");
  p.value = hits.back().value;
  p.channel = Channel::kNumber;
  p.span_begin = hits.back().begin;
  p.span_end = hits.back().end;
  return p;
}

}  // namespace marvis
