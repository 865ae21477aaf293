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
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "marvis/dimred.hpp"

namespace marvis {

struct NamedColor {
  std::string name;
  std::uint8_t r = 0;
  std::uint8_t g = 0;
  std::uint8_t b = 0;
  bool operator==(const NamedColor&) const = default;
};

// The 20 class colors in assignment order. Red is reserved for the query.
const std::vector<NamedColor>& named_palette();
const NamedColor& query_color();

class ColorMap {
 public:
  ColorMap() = default;
  ColorMap(std::vector<std::string> class_names, std::vector<NamedColor> colors);

  std::size_t size() const { return class_names_.size(); }
  const std::string& class_name(std::size_t i) const { return class_names_.at(i); }
  const NamedColor& color(std::size_t i) const { return colors_.at(i); }
  const std::vector<std::string>& class_names() const { return class_names_; }
  const std::vector<NamedColor>& colors() const { return colors_; }
  const NamedColor& query() const { return query_color(); }

  bool operator==(const ColorMap&) const = default;

 private:
  std::vector<std::string> class_names_;
  std::vector<NamedColor> colors_;
};

// Class i gets palette entry i. Fails with "palette exhausted" beyond 20.
ColorMap assign_palette(std::span<const std::string> class_names);

struct Viewport {
  double x_min = 0.0;
  double x_max = 1.0;
  double y_min = 0.0;
  double y_max = 1.0;
  double zoom_scale = 1.0;
  double margin_fraction = 0.10;

  double width() const { return x_max - x_min; }
  double height() const { return y_max - y_min; }
  bool contains(const Point2& p) const {
    return p.x >= x_min && p.x <= x_max && p.y >= y_min && p.y <= y_max;
  }
};

inline constexpr double kDefaultZoomScale = 2.0;

// Bounding box of the query and its neighbors, widened by margin_fraction of
// its size on each side, scaled about its center by zoom_scale, then clipped
// to the margin-widened extent of the whole layout. Zero-width axes are
// widened to 1% of the layout extent before zooming.
Viewport compute_zoom(const Layout2D& layout, std::size_t query_index,
                      std::span<const std::size_t> neighbor_indices, double zoom_scale,
                      double margin_fraction = 0.10);

// The whole layout, with margin.
Viewport full_viewport(const Layout2D& layout, double margin_fraction = 0.10);

enum class LegendPosition { kRight, kBottom };

struct RenderOptions {
  int width = 1024;
  int height = 1024;
  double point_radius = 5.0;  // pixels at 1024 px width
  LegendPosition legend_position = LegendPosition::kRight;
  bool show_knn_edges = false;
  std::string title = "t-SNE of training data (red star = query point)";

  void validate() const;
};

// Affine, aspect-preserving map from a viewport onto a pixel rectangle. The
// y axis points up in data space and down in pixel space.
class PixelMapper {
 public:
  PixelMapper(const Viewport& vp, double left, double top, double width, double height);

  Point2 to_pixel(const Point2& p) const;
  double scale() const { return scale_; }

 private:
  double scale_ = 1.0;
  double x0_ = 0.0;
  double y0_ = 0.0;
  double origin_x_ = 0.0;
  double origin_y_ = 0.0;
};

struct LegendEntry {
  std::string label;       // class name or value range
  std::string color_name;
  std::optional<int> class_index;  // class index, or bin index for regression

  std::string text() const { return label + " (" + color_name + ")"; }
  bool operator==(const LegendEntry&) const = default;
};

struct RenderResult {
  std::vector<unsigned char> png;
  std::vector<LegendEntry> legend;
  Viewport viewport;
  // Pixel rectangle of the plotting area and the query's pixel position.
  double plot_left = 0.0;
  double plot_top = 0.0;
  double plot_width = 0.0;
  double plot_height = 0.0;
  Point2 query_pixel;

  // Sidecar: legend entries, viewport and color map.
  std::string sidecar_json(const ColorMap* cmap = nullptr) const;
};

// Class indices of train points lying inside the viewport.
std::set<int> visible_classes(const Layout2D& layout, const Viewport& vp);

// Scatter of the train points in class colors with the query as a red star
// drawn last. The legend lists exactly the classes visible in the viewport.
// `neighbor_indices` are layout rows, used for the optional query->neighbor
// segments. Other query rows of a shared layout are not drawn.
RenderResult render_scatter(const Layout2D& layout, const ColorMap& cmap,
                            const Viewport& vp, const RenderOptions& opts,
                            std::size_t query_index,
                            std::span<const std::size_t> neighbor_indices = {});

// Equal-frequency bins over regression targets (at most `max_bins`). Values
// at a bin edge go to the upper bin; empty bins are dropped.
struct ValueBins {
  std::vector<double> edges;          // raw quantile edges, ascending
  std::vector<std::size_t> raw_to_bin;  // raw bin -> compact bin
  std::vector<std::pair<double, double>> ranges;  // observed min/max per bin
  std::vector<std::size_t> counts;

  std::size_t size() const { return ranges.size(); }
  std::size_t bin_of(double v) const;
  std::string range_label(std::size_t b) const;  // "lo–hi"
};

ValueBins compute_value_bins(std::span<const double> targets, std::size_t max_bins = 5);

// Sequential (viridis-like) colors for `n` bins.
std::vector<NamedColor> bin_palette(std::size_t n);

// Regression counterpart of render_scatter: train points colored by value
// bin, legend restricted to bins visible in the viewport.
RenderResult render_regression_scatter(const Layout2D& layout, const Viewport& vp,
                                       const RenderOptions& opts, std::size_t query_index,
                                       std::span<const std::size_t> neighbor_indices = {});

}  // namespace marvis
