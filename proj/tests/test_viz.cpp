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

#include <opencv2/imgcodecs.hpp>
#include <set>

#include "doctest.h"
#include "json.hpp"
#include "marvis/error.hpp"
#include "marvis/viz.hpp"
#include "support.hpp"

using namespace marvis;
using namespace marvis::testing;

namespace {

Layout2D layout_of(const std::vector<Point2>& pts, const std::vector<int>& labels,
                   std::size_t query_index) {
  Layout2D l;
  l.coords = pts;
  for (std::size_t i = 0; i < pts.size(); ++i) {
    PointRole r;
    if (i == query_index) {
      r.split = Split::kQuery;
    } else {
      r.label = labels[i];
    }
    l.roles.push_back(r);
  }
  return l;
}

ColorMap classes(std::size_t n) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < n; ++i) names.push_back("class_" + std::to_string(i));
  return assign_palette(names);
}

cv::Mat decode(const std::vector<unsigned char>& png) {
  return cv::imdecode(png, cv::IMREAD_COLOR);
}

const unsigned char kPngSignature[8] = {0x89, 0x50, 0x4E, 0x47, 0x0D, 0x0A, 0x1A, 0x0A};

}  // namespace

TEST_CASE("palette assignment") {
  const std::vector<std::string> two = {"cat", "dog"};
  const ColorMap m = assign_palette(two);
  CHECK(m.color(0).name == "blue");
  CHECK(m.color(1).name == "green");
  CHECK(assign_palette(two) == m);

  const auto& pal = named_palette();
  CHECK(pal.size() == 20);
  std::set<std::string> names;
  std::set<std::tuple<int, int, int>> rgbs;
  for (const auto& c : pal) {
    CHECK(c.name != "red");
    CHECK_FALSE(c == query_color());
    names.insert(c.name);
    rgbs.insert({c.r, c.g, c.b});
  }
  CHECK(names.size() == 20);
  CHECK(rgbs.size() == 20);
  CHECK(query_color().name == "red");

  CHECK_NOTHROW(classes(20));
  try {
    classes(25);
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("palette exhausted") != std::string::npos);
  }
}

TEST_CASE("zoom: unit square with scale 1 gives a 10% margin") {
  const Layout2D l = layout_of({{0.5, 0.5}, {0, 0}, {1, 0}, {0, 1}, {1, 1}}, {0, 0, 0, 0, 0}, 0);
  const std::size_t nb[] = {1, 2, 3, 4};
  const Viewport v = compute_zoom(l, 0, nb, 1.0);
  CHECK(v.x_min == doctest::Approx(-0.1));
  CHECK(v.x_max == doctest::Approx(1.1));
  CHECK(v.y_min == doctest::Approx(-0.1));
  CHECK(v.y_max == doctest::Approx(1.1));
}

TEST_CASE("zoom: scale 2 doubles the side when unclipped") {
  const Layout2D l = layout_of({{0.5, 0.5}, {0, 0}, {1, 0}, {0, 1}, {1, 1}, {-100, -100}, {100, 100}},
                              {0, 0, 0, 0, 0, 1, 1}, 0);
  const std::size_t nb[] = {1, 2, 3, 4};
  const Viewport v1 = compute_zoom(l, 0, nb, 1.0);
  const Viewport v2 = compute_zoom(l, 0, nb, 2.0);
  CHECK(v2.width() == doctest::Approx(2.0 * v1.width()));
  CHECK(v2.height() == doctest::Approx(2.0 * v1.height()));
  CHECK(v2.x_min == doctest::Approx(-0.7));
}

TEST_CASE("zoom: coincident points get 1% of the data extent") {
  const Layout2D l = layout_of({{3, 3}, {3, 3}, {3, 3}, {0, 0}, {10, 10}}, {0, 0, 0, 1, 1}, 0);
  const std::size_t nb[] = {1, 2};
  const Viewport v = compute_zoom(l, 0, nb, 1.0);
  CHECK(v.width() == doctest::Approx(0.1));
  CHECK(v.height() == doctest::Approx(0.1));
  CHECK(v.contains({3, 3}));

  const Layout2D same = layout_of({{2, 2}, {2, 2}, {2, 2}}, {0, 0, 0}, 0);
  const Viewport s = compute_zoom(same, 0, nb, 1.0);
  CHECK(s.width() == doctest::Approx(0.01));
  CHECK(s.contains({2, 2}));
}

TEST_CASE("zoom: always contains the query and its neighbors") {
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 5 + rng.below(100);
    std::vector<Point2> pts(n);
    for (auto& p : pts) p = {rng.normal() * 10.0, rng.normal() * 3.0};
    const Layout2D l = layout_of(pts, std::vector<int>(n, 0), 0);
    std::vector<std::size_t> nb;
    for (std::size_t i = 0; i < 1 + rng.below(n - 1); ++i) nb.push_back(1 + rng.below(n - 1));
    const double scale = 1.0 + 4.0 * rng.uniform();
    const Viewport v = compute_zoom(l, 0, nb, scale);
    CHECK(v.contains(pts[0]));
    for (auto i : nb) CHECK(v.contains(pts[i]));
  }
}

TEST_CASE("zoom errors") {
  const Layout2D l = layout_of({{0, 0}, {1, 1}, {2, 0}}, {0, 0, 0}, 0);
  const std::size_t nb[] = {1};
  const std::size_t bad[] = {7};
  CHECK_THROWS_AS(compute_zoom(l, 0, nb, 0.5), Error);
  CHECK_THROWS_AS(compute_zoom(l, 5, nb, 1.0), Error);
  CHECK_THROWS_AS(compute_zoom(l, 0, bad, 1.0), Error);
}

TEST_CASE("render: PNG signature and byte determinism") {
  Rng rng(3);
  std::vector<Point2> pts(60);
  std::vector<int> labels(60);
  for (std::size_t i = 0; i < 60; ++i) {
    labels[i] = static_cast<int>(i % 3);
    pts[i] = {rng.normal() + 4.0 * labels[i], rng.normal()};
  }
  const Layout2D l = layout_of(pts, labels, 0);
  const ColorMap cm = classes(3);
  const std::size_t nb[] = {3, 6, 9};
  RenderOptions opts;
  opts.show_knn_edges = true;
  const Viewport vp = compute_zoom(l, 0, nb, 2.0);
  const RenderResult a = render_scatter(l, cm, vp, opts, 0, nb);
  const RenderResult b = render_scatter(l, cm, vp, opts, 0, nb);
  REQUIRE(a.png.size() > 8);
  CHECK(std::equal(kPngSignature, kPngSignature + 8, a.png.begin()));
  CHECK(a.png == b.png);
  const cv::Mat img = decode(a.png);
  CHECK(img.cols == 1024);
  CHECK(img.rows == 1024);

  const auto side = nlohmann::json::parse(a.sidecar_json(&cm));
  CHECK(side["legend"].size() == a.legend.size());
  CHECK(side["colormap"].size() == 3);
  CHECK(side["query_marker"]["color"] == "red");
}

TEST_CASE("render: legend lists only classes inside the viewport") {
  // Classes 0 and 2 near the query, class 1 far away.
  std::vector<Point2> pts = {{0, 0}, {0.2, 0.1}, {-0.1, 0.3}, {0.3, -0.2}, {50, 50}, {51, 50}};
  const std::vector<int> labels = {0, 0, 2, 2, 1, 1};
  const Layout2D l = layout_of(pts, labels, 0);
  const std::size_t nb[] = {1, 2, 3};
  const Viewport vp = compute_zoom(l, 0, nb, 1.0);
  const RenderResult r = render_scatter(l, classes(3), vp, {}, 0, nb);
  REQUIRE(r.legend.size() == 2);
  CHECK(r.legend[0].text() == "class_0 (blue)");
  CHECK(r.legend[1].text() == "class_2 (orange)");
}

TEST_CASE("render: legend set equals the in-viewport classes over 100 random layouts") {
  Rng rng(2025);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n_classes = 2 + rng.below(8);
    const std::size_t n = 20 + rng.below(60);
    std::vector<Point2> pts(n);
    std::vector<int> labels(n);
    for (std::size_t i = 0; i < n; ++i) {
      labels[i] = static_cast<int>(rng.below(n_classes));
      pts[i] = {rng.normal() * 5.0 + labels[i] * 3.0, rng.normal() * 5.0};
    }
    const std::size_t q = rng.below(n);
    const Layout2D l = layout_of(pts, labels, q);
    std::vector<std::size_t> nb;
    const std::size_t k = 1 + rng.below(8);
    for (std::size_t i = 0; i < k; ++i) {
      std::size_t j = rng.below(n);
      if (j != q) nb.push_back(j);
    }
    const Viewport vp = compute_zoom(l, q, nb, 1.0 + 3.0 * rng.uniform());
    RenderOptions opts;
    opts.width = opts.height = 256 + static_cast<int>(rng.below(300));
    opts.legend_position = rng.below(2) ? LegendPosition::kRight : LegendPosition::kBottom;
    const RenderResult r = render_scatter(l, classes(n_classes), vp, opts, q, nb);

    std::set<int> expected;
    for (std::size_t i = 0; i < n; ++i) {
      if (i == q) continue;
      const auto& p = pts[i];
      if (p.x >= vp.x_min && p.x <= vp.x_max && p.y >= vp.y_min && p.y <= vp.y_max) {
        expected.insert(labels[i]);
      }
    }
    std::set<int> got;
    for (const auto& e : r.legend) got.insert(*e.class_index);
    CHECK(got == expected);
    CHECK(got.size() == r.legend.size());
    CHECK(std::equal(kPngSignature, kPngSignature + 8, r.png.begin()));
  }
}

TEST_CASE("render: the query star is red and on top") {
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Point2> pts(30);
    std::vector<int> labels(30);
    for (std::size_t i = 0; i < 30; ++i) {
      labels[i] = static_cast<int>(i % 4);
      pts[i] = {rng.normal(), rng.normal()};
    }
    // A train point exactly under the query.
    pts[1] = pts[0];
    const Layout2D l = layout_of(pts, labels, 0);
    const std::size_t nb[] = {1, 2, 3};
    RenderOptions opts;
    opts.show_knn_edges = trial % 2 == 0;
    const Viewport vp = compute_zoom(l, 0, nb, 2.0);
    const RenderResult r = render_scatter(l, classes(4), vp, opts, 0, nb);
    const cv::Mat img = decode(r.png);
    const int px = static_cast<int>(std::lround(r.query_pixel.x));
    const int py = static_cast<int>(std::lround(r.query_pixel.y));
    REQUIRE(px >= 0);
    REQUIRE(py >= 0);
    REQUIRE(px < img.cols);
    REQUIRE(py < img.rows);
    const cv::Vec3b bgr = img.at<cv::Vec3b>(py, px);
    CHECK(bgr[2] > 200);
    CHECK(bgr[1] < 60);
    CHECK(bgr[0] < 60);
  }
}

TEST_CASE("pixel mapping preserves aspect ratio") {
  Rng rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    Viewport vp{-rng.uniform() * 10, rng.uniform() * 10 + 0.1, -rng.uniform() * 3,
                rng.uniform() * 30 + 0.1};
    const PixelMapper m(vp, 40.0, 60.0, 700.0 + rng.below(300), 500.0 + rng.below(500));
    auto rand_pt = [&] {
      return Point2{vp.x_min + rng.uniform() * vp.width(), vp.y_min + rng.uniform() * vp.height()};
    };
    const Point2 a = rand_pt(), b = rand_pt();
    const Point2 pa = m.to_pixel(a), pb = m.to_pixel(b);
    const double s = std::hypot(pa.x - pb.x, pa.y - pb.y) / std::hypot(a.x - b.x, a.y - b.y);
    for (int k = 0; k < 20; ++k) {
      const Point2 c = rand_pt(), d = rand_pt();
      const Point2 pc = m.to_pixel(c), pd = m.to_pixel(d);
      const double on_screen = std::hypot(pc.x - pd.x, pc.y - pd.y);
      CHECK(std::abs(on_screen - s * std::hypot(c.x - d.x, c.y - d.y)) < 0.5);
      // Separately along each axis, with y flipped.
      CHECK((pc.x - pd.x) * (c.x - d.x) >= 0.0);
      CHECK((pc.y - pd.y) * (c.y - d.y) <= 0.0);
    }
  }
}

TEST_CASE("render option validation") {
  RenderOptions o;
  o.width = 100;
  CHECK_THROWS_AS(o.validate(), Error);
  const Layout2D l = layout_of({{0, 0}, {1, 1}, {5, 5}}, {0, 0, 0}, 0);
  Viewport vp{4, 6, 4, 6};
  CHECK_THROWS_AS(render_scatter(l, classes(1), vp, {}, 0), Error);
}

TEST_CASE("equal-frequency value bins") {
  std::vector<double> t;
  for (int i = 1; i <= 100; ++i) t.push_back(i);
  const ValueBins b = compute_value_bins(t);
  REQUIRE(b.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) CHECK(b.counts[i] == 20);
  CHECK(b.range_label(0) == "1–20");
  CHECK(b.range_label(4) == "81–100");
  CHECK(b.bin_of(20.0) == 0);
  CHECK(b.bin_of(21.0) == 1);

  const std::vector<double> constant(10, 4.5);
  const ValueBins c = compute_value_bins(constant);
  CHECK(c.size() == 1);
  CHECK(c.range_label(0) == "4.5–4.5");
}

TEST_CASE("regression render: legend of bins and determinism") {
  Rng rng(12);
  Layout2D l;
  for (int i = 0; i < 50; ++i) {
    l.coords.push_back({rng.normal(), rng.normal()});
    PointRole r;
    r.label = i;
    l.roles.push_back(r);
  }
  l.roles[0] = {Split::kQuery, std::nullopt};
  const std::size_t nb[] = {1, 2, 3, 4};
  const Viewport vp = full_viewport(l);
  const RenderResult a = render_regression_scatter(l, vp, {}, 0, nb);
  const RenderResult b = render_regression_scatter(l, vp, {}, 0, nb);
  CHECK(a.png == b.png);
  CHECK(a.legend.size() == 5);
  for (const auto& e : a.legend) CHECK(e.label.find("–") != std::string::npos);

  for (std::size_t i = 1; i < l.size(); ++i) l.roles[i].label = 7.0;
  const RenderResult c = render_regression_scatter(l, vp, {}, 0, nb);
  CHECK(c.legend.size() == 1);
}
