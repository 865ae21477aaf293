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
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <string_view>

#include "marvis/data.hpp"
#include "marvis/error.hpp"

namespace marvis {

ColumnType parse_column_type(const std::string& s) {
  if (s == "numeric") return ColumnType::kNumeric;
  if (s == "categorical") return ColumnType::kCategorical;
  if (s == "id") return ColumnType::kId;
  if (s == "label") return ColumnType::kLabel;
  if (s == "target") return ColumnType::kTarget;
  if (s == "split") return ColumnType::kSplit;
  fail(ErrorCode::kValidation, "unknown column type \"" + s + "\"");
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          cur.push_back('"');
          ++i;
        } else {
          quoted = false;
        }
      } else {
        cur.push_back(c);
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(trim(cur));
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  if (quoted) {
    fail(ErrorCode::kValidation, "unterminated quote on line " + std::to_string(line_no));
  }
  fields.push_back(trim(cur));
  return fields;
}

bool is_missing_token(const std::string& s) {
  return s.empty() || s == "NA" || s == "N/A" || s == "?" || s == "nan" || s == "NaN";
}

double parse_number(const std::string& s, const std::string& column) {
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) {
    fail(ErrorCode::kValidation,
         "column \"" + column + "\": \"" + s + "\" is not a finite number");
  }
  return v;
}

double median_of(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Table read_csv_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::kIo, "cannot open " + path.string());
  Table t;
  std::optional<std::vector<std::string>> header;
  std::optional<std::vector<std::string>> types;
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::vector<std::string>> raw_rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (line.rfind("#types:", 0) == 0) {
      if (types) fail(ErrorCode::kValidation, "duplicate #types: line");
      types = split_csv_line(line.substr(7), line_no);
      continue;
    }
    if (line[0] == '#') continue;
    auto fields = split_csv_line(line, line_no);
    if (!header) {
      header = std::move(fields);
      continue;
    }
    if (fields.size() != header->size()) {
      fail(ErrorCode::kValidation, "line " + std::to_string(line_no) + " has " +
                                       std::to_string(fields.size()) + " fields, expected " +
                                       std::to_string(header->size()));
    }
    raw_rows.push_back(std::move(fields));
  }
  if (!header) fail(ErrorCode::kValidation, path.string() + ": missing header row");
  if (!types) fail(ErrorCode::kValidation, path.string() + ": missing #types: line");
  if (types->size() != header->size()) {
    fail(ErrorCode::kValidation, "#types: lists " + std::to_string(types->size()) +
                                     " types for " + std::to_string(header->size()) +
                                     " columns");
  }
  t.column_names = *header;
  for (const auto& s : *types) t.column_types.push_back(parse_column_type(s));
  for (auto& r : raw_rows) {
    std::vector<std::optional<std::string>> row;
    row.reserve(r.size());
    for (auto& f : r) {
      if (is_missing_token(f)) {
        row.emplace_back(std::nullopt);
      } else {
        row.emplace_back(std::move(f));
      }
    }
    t.cells.push_back(std::move(row));
  }
  return t;
}

EmbeddingMatrix featurize_tabular(const Table& table, const TabularFeaturizerConfig& cfg) {
  const std::size_t n = table.num_rows();
  if (n == 0) fail(ErrorCode::kValidation, "cannot featurize an empty table");
  if (table.column_types.size() != table.num_columns()) {
    fail(ErrorCode::kValidation, "column types do not match the column count");
  }
  if (!cfg.fit_rows.empty() && cfg.fit_rows.size() != n) {
    fail(ErrorCode::kInvalidArgument, "fit_rows mask has the wrong length");
  }
  auto fits = [&](std::size_t r) { return cfg.fit_rows.empty() || cfg.fit_rows[r]; };
  if (std::none_of(cfg.fit_rows.begin(), cfg.fit_rows.end(), [](bool b) { return b; }) &&
      !cfg.fit_rows.empty()) {
    fail(ErrorCode::kInvalidArgument, "fit_rows selects no rows");
  }

  std::vector<std::vector<double>> columns;  // output columns
  std::optional<std::size_t> id_col;
  for (std::size_t c = 0; c < table.num_columns(); ++c) {
    const auto& name = table.column_names[c];
    switch (table.column_types[c]) {
      case ColumnType::kId:
        id_col = c;
        break;
      case ColumnType::kNumeric: {
        std::vector<double> fit_values;
        std::vector<std::optional<double>> parsed(n);
        for (std::size_t r = 0; r < n; ++r) {
          if (table.cells[r][c]) {
            parsed[r] = parse_number(*table.cells[r][c], name);
            if (fits(r)) fit_values.push_back(*parsed[r]);
          }
        }
        if (fit_values.empty()) {
          fail(ErrorCode::kValidation, "column \"" + name + "\" is entirely missing");
        }
        const double median = median_of(fit_values);
        std::vector<double> col(n);
        for (std::size_t r = 0; r < n; ++r) col[r] = parsed[r].value_or(median);

        double sum = 0.0;
        std::size_t count = 0;
        bool constant = true;
        std::optional<double> first;
        for (std::size_t r = 0; r < n; ++r) {
          if (!fits(r)) continue;
          sum += col[r];
          ++count;
          if (!first) first = col[r];
          if (col[r] != *first) constant = false;
        }
        if (constant) {
          columns.emplace_back(n, 0.0);
          break;
        }
        const double mean = sum / static_cast<double>(count);
        double ss = 0.0;
        for (std::size_t r = 0; r < n; ++r) {
          if (fits(r)) ss += (col[r] - mean) * (col[r] - mean);
        }
        const double sd = std::sqrt(ss / static_cast<double>(count));
        for (auto& v : col) v = (v - mean) / sd;
        columns.push_back(std::move(col));
        break;
      }
      case ColumnType::kCategorical: {
        std::set<std::string> categories;
        bool missing_seen = false;
        bool any_present = false;
        for (std::size_t r = 0; r < n; ++r) {
          if (!fits(r)) continue;
          if (table.cells[r][c]) {
            categories.insert(*table.cells[r][c]);
            any_present = true;
          } else {
            missing_seen = true;
          }
        }
        if (!any_present) {
          fail(ErrorCode::kValidation, "column \"" + name + "\" is entirely missing");
        }
        std::map<std::string, std::size_t> slot;
        for (const auto& cat : categories) slot.emplace(cat, slot.size());
        const std::size_t width = categories.size() + (missing_seen ? 1 : 0);
        std::vector<std::vector<double>> onehot(width, std::vector<double>(n, 0.0));
        for (std::size_t r = 0; r < n; ++r) {
          const auto& cell = table.cells[r][c];
          if (!cell) {
            if (missing_seen) onehot[width - 1][r] = 1.0;
            continue;
          }
          const auto it = slot.find(*cell);
          if (it != slot.end()) onehot[it->second][r] = 1.0;
        }
        for (auto& col : onehot) columns.push_back(std::move(col));
        break;
      }
      default:
        break;
    }
  }
  if (columns.empty()) {
    fail(ErrorCode::kValidation, "table has no numeric or categorical columns");
  }

  const std::size_t d = columns.size();
  std::vector<double> values(n * d);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t j = 0; j < d; ++j) values[r * d + j] = columns[j][r];
  }
  std::vector<std::string> ids(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (id_col && table.cells[r][*id_col]) {
      ids[r] = *table.cells[r][*id_col];
    } else {
      ids[r] = "row" + std::to_string(r);
    }
  }
  return EmbeddingMatrix(n, d, std::move(values), std::move(ids), Metric::kEuclidean);
}

LoadedDataset build_tabular_dataset(const Table& table, const std::string& name,
                                    double query_fraction, std::uint64_t seed) {
  if (table.num_rows() == 0) fail(ErrorCode::kValidation, "cannot featurize an empty table");
  std::optional<std::size_t> label_col, target_col, split_col, id_col;
  for (std::size_t c = 0; c < table.num_columns(); ++c) {
    auto set_once = [&](std::optional<std::size_t>& slot) {
      if (slot) {
        fail(ErrorCode::kValidation, "more than one column of the same role type");
      }
      slot = c;
    };
    switch (table.column_types[c]) {
      case ColumnType::kLabel: set_once(label_col); break;
      case ColumnType::kTarget: set_once(target_col); break;
      case ColumnType::kSplit: set_once(split_col); break;
      case ColumnType::kId: set_once(id_col); break;
      default: break;
    }
  }
  if (label_col.has_value() == target_col.has_value()) {
    fail(ErrorCode::kValidation, "table needs exactly one label or target column");
  }

  Dataset ds;
  ds.name = name;
  ds.task = label_col ? TaskKind::kClassification : TaskKind::kRegression;
  if (label_col) {
    std::set<std::string> names;
    for (const auto& row : table.cells) {
      if (row[*label_col]) names.insert(*row[*label_col]);
    }
    ds.class_names.assign(names.begin(), names.end());
  }
  std::set<std::string> seen_ids;
  for (std::size_t r = 0; r < table.num_rows(); ++r) {
    const auto& row = table.cells[r];
    SampleRecord s;
    s.id = (id_col && row[*id_col]) ? *row[*id_col] : "row" + std::to_string(r);
    if (label_col && row[*label_col]) {
      const auto it = std::lower_bound(ds.class_names.begin(), ds.class_names.end(),
                                       *row[*label_col]);
      s.label = static_cast<double>(it - ds.class_names.begin());
    } else if (target_col && row[*target_col]) {
      s.label = parse_number(*row[*target_col], table.column_names[*target_col]);
    }
    if (split_col) {
      const auto& v = row[*split_col];
      if (v && *v == "train") {
        s.split = Split::kTrain;
      } else if (v && (*v == "query" || *v == "test")) {
        s.split = Split::kQuery;
      } else {
        fail(ErrorCode::kValidation, "row " + std::to_string(r) +
                                         ": split must be train or query");
      }
    } else {
      s.split = s.label ? Split::kTrain : Split::kQuery;
    }
    ds.samples.push_back(std::move(s));
  }
  if (!split_col) ds = split_dataset(ds, query_fraction, seed);
  ds.validate();

  for (std::size_t c = 0; c < table.num_columns(); ++c) {
    const auto t = table.column_types[c];
    if (t == ColumnType::kNumeric) ds.metadata.features[table.column_names[c]] = "numeric";
    if (t == ColumnType::kCategorical) {
      ds.metadata.features[table.column_names[c]] = "categorical";
    }
  }

  TabularFeaturizerConfig cfg;
  cfg.fit_rows.resize(table.num_rows());
  for (std::size_t r = 0; r < table.num_rows(); ++r) {
    cfg.fit_rows[r] = ds.samples[r].split == Split::kTrain;
  }
  EmbeddingMatrix emb = featurize_tabular(table, cfg);
  std::vector<std::string> ids;
  for (const auto& s : ds.samples) ids.push_back(s.id);
  emb = EmbeddingMatrix(emb.rows(), emb.cols(), emb.values(), std::move(ids),
                        Metric::kEuclidean);
  return {std::move(ds), std::move(emb)};
}

}  // namespace marvis
