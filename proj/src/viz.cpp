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

#include "marvis/viz.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "json.hpp"
#include "marvis/error.hpp"

namespace marvis {

const std::vector<NamedColor>& named_palette() {
  static const std::vector<NamedColor> palette = {
      {"blue", 31, 119, 180},     {"green", 44, 160, 44},      {"orange", 255, 127, 14},
      {"purple", 148, 103, 189},  {"brown", 140, 86, 75},      {"pink", 227, 119, 194},
      {"gray", 127, 127, 127},    {"olive", 188, 189, 34},     {"cyan", 23, 190, 207},
      {"navy", 0, 0, 128},        {"teal", 0, 128, 128},       {"maroon", 128, 0, 0},
      {"lime", 50, 205, 50},      {"magenta", 255, 0, 255},    {"gold", 255, 215, 0},
      {"black", 0, 0, 0},         {"salmon", 250, 128, 114},   {"turquoise", 64, 224, 208},
      {"indigo", 75, 0, 130},     {"violet", 238, 130, 238},
  };
  return palette;
}

const NamedColor& query_color() {
  static const NamedColor red{"red", 255, 0, 0};
  return red;
}

ColorMap::ColorMap(std::vector<std::string> class_names, std::vector<NamedColor> colors)
    : class_names_(std::move(class_names)), colors_(std::move(colors)) {
  if (class_names_.size() != colors_.size()) {
    fail(ErrorCode::kInvalidArgument, "color map needs one color per class");
  }
}

ColorMap assign_palette(std::span<const std::string> class_names) {
  const auto& palette = named_palette();
  if (class_names.empty()) fail(ErrorCode::kInvalidArgument, "no classes to color");
  if (class_names.size() > palette.size()) {
    fail(ErrorCode::kInvalidArgument,
         "palette exhausted: " + std::to_string(class_names.size()) + " classes, " +
             std::to_string(palette.size()) + " named colors");
  }
  return ColorMap({class_names.begin(), class_names.end()},
                  {palette.begin(), palette.begin() + static_cast<std::ptrdiff_t>(
                                                          class_names.size())});
}

// ---------------------------------------------------------------------------
// Viewport

namespace {

struct Box {
  double x0 = std::numeric_limits<double>::infinity();
  double x1 = -std::numeric_limits<double>::infinity();
  double y0 = std::numeric_limits<double>::infinity();
  double y1 = -std::numeric_limits<double>::infinity();

  void add(const Point2& p) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  Box widened(double fraction) const {
    const double mx = fraction * (x1 - x0);
    const double my = fraction * (y1 - y0);
    return {x0 - mx, x1 + mx, y0 - my, y1 + my};
  }
};

Box layout_extent(const Layout2D& layout) {
  if (layout.coords.empty()) fail(ErrorCode::kInvalidArgument, "empty layout");
  Box b;
  for (const auto& p : layout.coords) b.add(p);
  return b;
}

}  // namespace

Viewport full_viewport(const Layout2D& layout, double margin_fraction) {
  Box e = layout_extent(layout).widened(margin_fraction);
  const double extent = std::max(e.x1 - e.x0, e.y1 - e.y0);
  const double pad = 0.005 * (extent > 0.0 ? extent : 1.0);
  if (e.x1 == e.x0) {
    e.x0 -= pad;
    e.x1 += pad;
  }
  if (e.y1 == e.y0) {
    e.y0 -= pad;
    e.y1 += pad;
  }
  return {e.x0, e.x1, e.y0, e.y1, 1.0, margin_fraction};
}

Viewport compute_zoom(const Layout2D& layout, std::size_t query_index,
                      std::span<const std::size_t> neighbor_indices, double zoom_scale,
                      double margin_fraction) {
  if (!(zoom_scale >= 1.0) || !std::isfinite(zoom_scale)) {
    fail(ErrorCode::kInvalidArgument, "zoom_scale must be >= 1");
  }
  if (!(margin_fraction >= 0.0)) {
    fail(ErrorCode::kInvalidArgument, "margin_fraction must be >= 0");
  }
  const std::size_t n = layout.size();
  if (query_index >= n) fail(ErrorCode::kInvalidArgument, "query index out of range");
  Box b;
  b.add(layout.coords[query_index]);
  for (std::size_t i : neighbor_indices) {
    if (i >= n) fail(ErrorCode::kInvalidArgument, "neighbor index out of range");
    b.add(layout.coords[i]);
  }
  const Box data = layout_extent(layout);
  const double extent = std::max(data.x1 - data.x0, data.y1 - data.y0);
  const double degenerate_side = 0.01 * (extent > 0.0 ? extent : 1.0);

  Box v = b.widened(margin_fraction);
  if (v.x1 == v.x0) {
    v.x0 -= 0.5 * degenerate_side;
    v.x1 += 0.5 * degenerate_side;
  }
  if (v.y1 == v.y0) {
    v.y0 -= 0.5 * degenerate_side;
    v.y1 += 0.5 * degenerate_side;
  }
  const double cx = 0.5 * (v.x0 + v.x1);
  const double cy = 0.5 * (v.y0 + v.y1);
  const double hx = 0.5 * (v.x1 - v.x0) * zoom_scale;
  const double hy = 0.5 * (v.y1 - v.y0) * zoom_scale;
  v = {cx - hx, cx + hx, cy - hy, cy + hy};

  const Box clip = data.widened(margin_fraction);
  if (clip.x1 > clip.x0) {
    v.x0 = std::max(v.x0, std::min(clip.x0, b.x0));
    v.x1 = std::min(v.x1, std::max(clip.x1, b.x1));
  }
  if (clip.y1 > clip.y0) {
    v.y0 = std::max(v.y0, std::min(clip.y0, b.y0));
    v.y1 = std::min(v.y1, std::max(clip.y1, b.y1));
  }
  return {v.x0, v.x1, v.y0, v.y1, zoom_scale, margin_fraction};
}

void RenderOptions::validate() const {
  if (width < 256 || height < 256) {
    fail(ErrorCode::kInvalidArgument, "image width and height must be >= 256 pixels");
  }
  if (!(point_radius > 0.0)) fail(ErrorCode::kInvalidArgument, "point radius must be > 0");
}

PixelMapper::PixelMapper(const Viewport& vp, double left, double top, double width,
                         double height) {
  if (!(vp.width() > 0.0) || !(vp.height() > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "viewport has zero area");
  }
  scale_ = std::min(width / vp.width(), height / vp.height());
  x0_ = vp.x_min;
  y0_ = vp.y_max;
  origin_x_ = left + 0.5 * (width - vp.width() * scale_);
  origin_y_ = top + 0.5 * (height - vp.height() * scale_);
}

Point2 PixelMapper::to_pixel(const Point2& p) const {
  return {origin_x_ + (p.x - x0_) * scale_, origin_y_ + (y0_ - p.y) * scale_};
}

std::set<int> visible_classes(const Layout2D& layout, const Viewport& vp) {
  std::set<int> out;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& role = layout.roles[i];
    if (role.split != Split::kTrain || !role.label) continue;
    if (vp.contains(layout.coords[i])) out.insert(static_cast<int>(*role.label));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Value bins

std::size_t ValueBins::bin_of(double v) const {
  const auto raw = static_cast<std::size_t>(std::upper_bound(edges.begin(), edges.end(), v) -
                                            edges.begin());
  return raw_to_bin[raw];
}

std::string ValueBins::range_label(std::size_t b) const {
  char buf[96];
  std::snprintf(buf, sizeof buf, "%.4g–%.4g", ranges.at(b).first, ranges.at(b).second);
  return buf;
}

ValueBins compute_value_bins(std::span<const double> targets, std::size_t max_bins) {
  if (targets.empty()) fail(ErrorCode::kInvalidArgument, "no targets to bin");
  if (max_bins < 1) fail(ErrorCode::kInvalidArgument, "max_bins must be >= 1");
  for (double t : targets) {
    if (!std::isfinite(t)) fail(ErrorCode::kInvalidArgument, "non-finite target");
  }
  std::vector<double> sorted(targets.begin(), targets.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  const std::size_t raw_bins = std::min(max_bins, n);

  ValueBins bins;
  for (std::size_t b = 1; b < raw_bins; ++b) bins.edges.push_back(sorted[b * n / raw_bins]);

  std::vector<std::size_t> raw_counts(raw_bins, 0);
  std::vector<std::pair<double, double>> raw_ranges(
      raw_bins, {std::numeric_limits<double>::infinity(),
                 -std::numeric_limits<double>::infinity()});
  for (double v : sorted) {
    const auto raw = static_cast<std::size_t>(
        std::upper_bound(bins.edges.begin(), bins.edges.end(), v) - bins.edges.begin());
    ++raw_counts[raw];
    raw_ranges[raw].first = std::min(raw_ranges[raw].first, v);
    raw_ranges[raw].second = std::max(raw_ranges[raw].second, v);
  }
  bins.raw_to_bin.assign(raw_bins, 0);
  for (std::size_t r = 0; r < raw_bins; ++r) {
    if (raw_counts[r] > 0) {
      bins.ranges.push_back(raw_ranges[r]);
      bins.counts.push_back(raw_counts[r]);
    }
    // Empty raw bins are never hit by a value that produced the edges; map
    // them onto the next populated bin for out-of-sample values.
    bins.raw_to_bin[r] = raw_counts[r] > 0 ? bins.ranges.size() - 1 : bins.ranges.size();
  }
  for (auto& idx : bins.raw_to_bin) idx = std::min(idx, bins.ranges.size() - 1);
  return bins;
}

std::vector<NamedColor> bin_palette(std::size_t n) {
  static const std::array<NamedColor, 5> ramp = {{{"purple", 68, 1, 84},
                                                  {"blue", 59, 82, 139},
                                                  {"teal", 33, 145, 140},
                                                  {"green", 94, 201, 98},
                                                  {"yellow", 253, 231, 37}}};
  if (n < 1 || n > ramp.size()) fail(ErrorCode::kInvalidArgument, "bin count out of range");
  std::vector<NamedColor> out;
  for (std::size_t b = 0; b < n; ++b) {
    const std::size_t idx = n == 1 ? 2 : (b * (ramp.size() - 1) + (n - 1) / 2) / (n - 1);
    out.push_back(ramp[idx]);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Raster

namespace {

constexpr int kShift = 4;  // sub-pixel bits for OpenCV drawing
constexpr double kSub = 1 << kShift;

cv::Scalar bgr(const NamedColor& c) { return cv::Scalar(c.b, c.g, c.r); }

cv::Point subpixel(const Point2& p) {
  return {static_cast<int>(std::lround(p.x * kSub)), static_cast<int>(std::lround(p.y * kSub))};
}

// Hershey fonts cover printable ASCII only.
std::string ascii_only(const std::string& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const auto c = static_cast<unsigned char>(s[i]);
    if (c == 0xE2 && i + 2 < s.size() && static_cast<unsigned char>(s[i + 1]) == 0x80 &&
        (static_cast<unsigned char>(s[i + 2]) == 0x93 ||
         static_cast<unsigned char>(s[i + 2]) == 0x94)) {
      out.push_back('-');
      i += 2;
    } else if (c >= 0x20 && c < 0x7F) {
      out.push_back(static_cast<char>(c));
    } else if (c >= 0xC0 || c < 0x20) {
      out.push_back('?');
    }
  }
  return out;
}

struct Canvas {
  cv::Mat img;
  double ui_scale = 1.0;
  double plot_left = 0, plot_top = 0, plot_width = 0, plot_height = 0;
  double legend_left = 0, legend_top = 0, legend_width = 0, legend_height = 0;
};

Canvas make_canvas(const RenderOptions& opts) {
  Canvas c;
  c.img = cv::Mat(opts.height, opts.width, CV_8UC3, cv::Scalar(255, 255, 255));
  c.ui_scale = opts.width / 1024.0;
  const double pad = 16.0 * c.ui_scale;
  const double title_h = 36.0 * c.ui_scale;
  if (opts.legend_position == LegendPosition::kRight) {
    c.legend_width = std::round(0.28 * opts.width);
    c.plot_left = pad;
    c.plot_top = title_h + pad;
    c.plot_width = opts.width - c.legend_width - 2 * pad;
    c.plot_height = opts.height - c.plot_top - pad;
    c.legend_left = c.plot_left + c.plot_width + pad;
    c.legend_top = c.plot_top;
    c.legend_height = c.plot_height;
  } else {
    c.legend_height = std::round(0.24 * opts.height);
    c.plot_left = pad;
    c.plot_top = title_h + pad;
    c.plot_width = opts.width - 2 * pad;
    c.plot_height = opts.height - c.plot_top - c.legend_height - 2 * pad;
    c.legend_left = pad;
    c.legend_top = c.plot_top + c.plot_height + pad;
    c.legend_width = c.plot_width;
  }
  cv::putText(c.img, ascii_only(opts.title),
              cv::Point(static_cast<int>(pad), static_cast<int>(title_h * 0.75)),
              cv::FONT_HERSHEY_SIMPLEX, 0.7 * c.ui_scale, cv::Scalar(0, 0, 0),
              std::max(1, static_cast<int>(std::lround(c.ui_scale))), cv::LINE_AA);
  cv::rectangle(c.img,
                cv::Rect(static_cast<int>(c.plot_left), static_cast<int>(c.plot_top),
                         static_cast<int>(c.plot_width), static_cast<int>(c.plot_height)),
                cv::Scalar(60, 60, 60), 1, cv::LINE_8);
  return c;
}

void draw_point(Canvas& c, const Point2& px, double radius, const NamedColor& color) {
  const int r = static_cast<int>(std::lround(radius * kSub));
  cv::circle(c.img, subpixel(px), r, bgr(color), cv::FILLED, cv::LINE_AA, kShift);
  cv::circle(c.img, subpixel(px), r, cv::Scalar(40, 40, 40), 1, cv::LINE_AA, kShift);
}

void draw_star(Canvas& c, const Point2& px, double radius) {
  std::vector<cv::Point> pts;
  for (int k = 0; k < 10; ++k) {
    const double r = k % 2 == 0 ? radius : 0.45 * radius;
    const double a = -M_PI / 2.0 + k * M_PI / 5.0;
    pts.push_back(subpixel({px.x + r * std::cos(a), px.y + r * std::sin(a)}));
  }
  const std::vector<std::vector<cv::Point>> polys = {pts};
  cv::fillPoly(c.img, polys, bgr(query_color()), cv::LINE_AA, kShift);
  cv::polylines(c.img, polys, true, cv::Scalar(0, 0, 0), 1, cv::LINE_AA, kShift);
}

void draw_legend(Canvas& c, const std::vector<LegendEntry>& legend,
                 const std::vector<NamedColor>& swatches, const RenderOptions& opts) {
  const double s = c.ui_scale;
  const double line_h = 28.0 * s;
  const double font = 0.5 * s;
  const int thickness = std::max(1, static_cast<int>(std::lround(s)));
  const int columns =
      opts.legend_position == LegendPosition::kRight
          ? 1
          : std::max(1, static_cast<int>(c.legend_width / (240.0 * s)));
  const double col_w = c.legend_width / columns;
  cv::putText(c.img, "Legend",
              cv::Point(static_cast<int>(c.legend_left), static_cast<int>(c.legend_top + 18 * s)),
              cv::FONT_HERSHEY_SIMPLEX, 0.6 * s, cv::Scalar(0, 0, 0), thickness, cv::LINE_AA);
  const double y0 = c.legend_top + 18 * s + line_h;
  for (std::size_t i = 0; i < legend.size(); ++i) {
    const double x = c.legend_left + static_cast<double>(i % columns) * col_w;
    const double y = y0 + static_cast<double>(i / columns) * line_h;
    draw_point(c, {x + 8 * s, y - 5 * s}, opts.point_radius * s * 1.2, swatches[i]);
    cv::putText(c.img, ascii_only(legend[i].text()),
                cv::Point(static_cast<int>(x + 22 * s), static_cast<int>(y)),
                cv::FONT_HERSHEY_SIMPLEX, font, cv::Scalar(0, 0, 0), thickness, cv::LINE_AA);
  }
  const double y = y0 + static_cast<double>((legend.size() + columns - 1) / columns) * line_h +
                   4 * s;
  draw_star(c, {c.legend_left + 8 * s, y - 5 * s}, opts.point_radius * s * 2.2);
  cv::putText(c.img, "query point (red star)",
              cv::Point(static_cast<int>(c.legend_left + 22 * s), static_cast<int>(y)),
              cv::FONT_HERSHEY_SIMPLEX, font, cv::Scalar(0, 0, 0), thickness, cv::LINE_AA);
}

std::vector<unsigned char> encode_png(const cv::Mat& img) {
  std::vector<unsigned char> out;
  const std::vector<int> params = {cv::IMWRITE_PNG_COMPRESSION, 6};
  if (!cv::imencode(".png", img, out, params)) {
    fail(ErrorCode::kIo, "PNG encoding failed");
  }
  return out;
}

// Shared body of the two scatter renderers. `point_color` returns the
// swatch index of a train row, or -1 to skip it.
template <typename ColorOf>
RenderResult render_common(const Layout2D& layout, const Viewport& vp,
                           const RenderOptions& opts, std::size_t query_index,
                           std::span<const std::size_t> neighbor_indices,
                           const std::vector<NamedColor>& swatch_colors,
                           std::vector<LegendEntry> legend, ColorOf point_color) {
  opts.validate();
  if (layout.roles.size() != layout.size()) {
    fail(ErrorCode::kInvalidArgument, "layout roles do not match coordinates");
  }
  if (query_index >= layout.size()) {
    fail(ErrorCode::kInvalidArgument, "query index out of range");
  }
  const Point2 query = layout.coords[query_index];
  if (!vp.contains(query)) {
    fail(ErrorCode::kInvalidArgument, "viewport excludes the query point");
  }
  Canvas c = make_canvas(opts);
  const PixelMapper map(vp, c.plot_left, c.plot_top, c.plot_width, c.plot_height);
  const double radius = opts.point_radius * c.ui_scale;
  const Point2 qpx = map.to_pixel(query);

  if (opts.show_knn_edges) {
    for (std::size_t i : neighbor_indices) {
      if (i >= layout.size()) fail(ErrorCode::kInvalidArgument, "neighbor index out of range");
      if (!vp.contains(layout.coords[i])) continue;
      cv::line(c.img, subpixel(qpx), subpixel(map.to_pixel(layout.coords[i])),
               cv::Scalar(150, 150, 150), 1, cv::LINE_AA, kShift);
    }
  }
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (layout.roles[i].split != Split::kTrain) continue;
    if (!vp.contains(layout.coords[i])) continue;
    const int idx = point_color(i);
    if (idx < 0) continue;
    draw_point(c, map.to_pixel(layout.coords[i]), radius,
               swatch_colors[static_cast<std::size_t>(idx)]);
  }
  draw_star(c, qpx, radius * 3.2);

  std::vector<NamedColor> legend_colors;
  for (const auto& e : legend) {
    legend_colors.push_back(swatch_colors[static_cast<std::size_t>(*e.class_index)]);
  }
  draw_legend(c, legend, legend_colors, opts);

  RenderResult out;
  out.png = encode_png(c.img);
  out.legend = std::move(legend);
  out.viewport = vp;
  out.plot_left = c.plot_left;
  out.plot_top = c.plot_top;
  out.plot_width = c.plot_width;
  out.plot_height = c.plot_height;
  out.query_pixel = qpx;
  return out;
}

}  // namespace

RenderResult render_scatter(const Layout2D& layout, const ColorMap& cmap,
                            const Viewport& vp, const RenderOptions& opts,
                            std::size_t query_index,
                            std::span<const std::size_t> neighbor_indices) {
  for (const auto& role : layout.roles) {
    if (role.split == Split::kTrain && role.label &&
        (*role.label < 0 || *role.label >= static_cast<double>(cmap.size()))) {
      fail(ErrorCode::kInvalidArgument, "layout label outside the color map");
    }
  }
  std::vector<LegendEntry> legend;
  for (int cls : visible_classes(layout, vp)) {
    const auto idx = static_cast<std::size_t>(cls);
    legend.push_back({cmap.class_name(idx), cmap.color(idx).name, cls});
  }
  return render_common(layout, vp, opts, query_index, neighbor_indices, cmap.colors(),
                       std::move(legend), [&](std::size_t i) {
                         const auto& label = layout.roles[i].label;
                         return label ? static_cast<int>(*label) : -1;
                       });
}

RenderResult render_regression_scatter(const Layout2D& layout, const Viewport& vp,
                                       const RenderOptions& opts, std::size_t query_index,
                                       std::span<const std::size_t> neighbor_indices) {
  std::vector<double> targets;
  for (const auto& role : layout.roles) {
    if (role.split == Split::kTrain && role.label) targets.push_back(*role.label);
  }
  const ValueBins bins = compute_value_bins(targets);
  const auto colors = bin_palette(bins.size());
  std::set<std::size_t> visible;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& role = layout.roles[i];
    if (role.split == Split::kTrain && role.label && vp.contains(layout.coords[i])) {
      visible.insert(bins.bin_of(*role.label));
    }
  }
  std::vector<LegendEntry> legend;
  for (std::size_t b : visible) {
    legend.push_back({bins.range_label(b), colors[b].name, static_cast<int>(b)});
  }
  return render_common(layout, vp, opts, query_index, neighbor_indices, colors,
                       std::move(legend), [&](std::size_t i) {
                         const auto& label = layout.roles[i].label;
                         return label ? static_cast<int>(bins.bin_of(*label)) : -1;
                       });
}

std::string RenderResult::sidecar_json(const ColorMap* cmap) const {
  nlohmann::json j;
  j["legend"] = nlohmann::json::array();
  for (const auto& e : legend) {
    nlohmann::json entry = {{"label", e.label}, {"color", e.color_name}, {"text", e.text()}};
    entry["index"] = e.class_index ? nlohmann::json(*e.class_index) : nlohmann::json();
    j["legend"].push_back(std::move(entry));
  }
  j["viewport"] = {{"x_min", viewport.x_min},
                   {"x_max", viewport.x_max},
                   {"y_min", viewport.y_min},
                   {"y_max", viewport.y_max},
                   {"zoom_scale", viewport.zoom_scale},
                   {"margin_fraction", viewport.margin_fraction}};
  j["colormap"] = nlohmann::json::array();
  if (cmap) {
    for (std::size_t i = 0; i < cmap->size(); ++i) {
      const auto& c = cmap->color(i);
      j["colormap"].push_back(
          {{"class", cmap->class_name(i)}, {"color", c.name}, {"rgb", {c.r, c.g, c.b}}});
    }
  }
  j["query_marker"] = {{"color", query_color().name}, {"shape", "star"}};
  j["query_pixel"] = {query_pixel.x, query_pixel.y};
  return j.dump(2);
}

}  // namespace marvis
