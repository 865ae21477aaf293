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
#include <cmath>
#include <limits>

#include "json.hpp"
#include "marvis/dimred.hpp"
#include "marvis/error.hpp"
#include "marvis/random.hpp"

namespace marvis {

namespace {

constexpr int kMaxBisectionSteps = 100;
constexpr double kPerplexityTolerance = 1e-4;

std::vector<double> squared_distances(const EmbeddingMatrix& x) {
  const std::size_t n = x.rows();
  std::vector<double> d(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto ri = x.row(i);
    for (std::size_t j = i + 1; j < n; ++j) {
      const auto rj = x.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < x.cols(); ++k) {
        const double diff = ri[k] - rj[k];
        s += diff * diff;
      }
      d[i * n + j] = s;
      d[j * n + i] = s;
    }
  }
  return d;
}

// Conditional distribution of one row for a given precision beta. Distances
// are shifted by the row minimum, which leaves the distribution unchanged.
// Returns the natural-log entropy.
double row_distribution(std::span<const double> shifted, std::size_t self, double beta,
                        std::span<double> out) {
  double z = 0.0;
  double weighted = 0.0;
  for (std::size_t j = 0; j < shifted.size(); ++j) {
    if (j == self) {
      out[j] = 0.0;
      continue;
    }
    const double w = std::exp(-beta * shifted[j]);
    out[j] = w;
    z += w;
    weighted += shifted[j] * w;
  }
  for (auto& v : out) v /= z;
  return std::log(z) + beta * weighted / z;
}

}  // namespace

void TsneParams::validate() const {
  if (!(perplexity >= 1.0)) fail(ErrorCode::kInvalidArgument, "perplexity must be >= 1");
  if (iterations < 1) fail(ErrorCode::kInvalidArgument, "iterations must be >= 1");
  if (!(learning_rate > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "learning rate must be positive");
  }
  if (early_exaggeration_iters < 0 || !(early_exaggeration > 0.0)) {
    fail(ErrorCode::kInvalidArgument, "invalid early exaggeration settings");
  }
  if (kl_every < 1) fail(ErrorCode::kInvalidArgument, "kl_every must be >= 1");
  if (!(min_prob >= 0.0)) fail(ErrorCode::kInvalidArgument, "min_prob must be >= 0");
}

double realized_perplexity(const AffinityMatrix& a, std::size_t i) {
  double h = 0.0;
  for (std::size_t j = 0; j < a.n; ++j) {
    const double p = a.conditional[i * a.n + j];
    if (p > 0.0) h -= p * std::log2(p);
  }
  return std::exp2(h);
}

AffinityMatrix pairwise_affinities(const EmbeddingMatrix& x, double perplexity,
                                   double min_prob) {
  const std::size_t n = x.rows();
  if (n < 3) fail(ErrorCode::kInvalidArgument, "n too small: t-SNE needs at least 3 points");
  if (!(perplexity >= 1.0) || !(perplexity < static_cast<double>(n - 1))) {
    fail(ErrorCode::kInvalidArgument,
         "perplexity must lie in [1, n - 1) = [1, " + std::to_string(n - 1) + ")");
  }
  const auto d = squared_distances(x);

  AffinityMatrix a;
  a.n = n;
  a.target_perplexity = perplexity;
  a.conditional.assign(n * n, 0.0);
  a.row_sigmas.assign(n, 0.0);
  const double log_target = std::log(perplexity);

  std::vector<double> shifted(n);
  for (std::size_t i = 0; i < n; ++i) {
    double dmin = std::numeric_limits<double>::infinity();
    double dmax = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      dmin = std::min(dmin, d[i * n + j]);
      dmax = std::max(dmax, d[i * n + j]);
    }
    std::span<double> row(a.conditional.data() + i * n, n);
    double mean_shift = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      shifted[j] = j == i ? 0.0 : d[i * n + j] - dmin;
      mean_shift += shifted[j];
    }
    mean_shift /= static_cast<double>(n - 1);

    // Equidistant neighbours (up to round-off): every bandwidth yields the
    // uniform row.
    if (dmax - dmin <= 1e-12 * dmax) {
      row_distribution(shifted, i, 1.0, row);
      a.row_sigmas[i] = std::numeric_limits<double>::infinity();
      continue;
    }

    double beta = mean_shift > 0.0 ? 1.0 / mean_shift : 1.0;
    double lo = 0.0;
    double hi = std::numeric_limits<double>::infinity();
    for (int step = 0; step < kMaxBisectionSteps; ++step) {
      const double h = row_distribution(shifted, i, beta, row);
      const double realized = std::exp(h);
      if (std::abs(realized - perplexity) < 1e-3 * kPerplexityTolerance) break;
      if (h > log_target) {
        lo = beta;
        beta = std::isinf(hi) ? beta * 2.0 : 0.5 * (beta + hi);
      } else {
        hi = beta;
        beta = 0.5 * (beta + lo);
      }
    }
    const double h = row_distribution(shifted, i, beta, row);
    if (std::abs(std::exp(h) - perplexity) >= kPerplexityTolerance) {
      fail(ErrorCode::kNumerical,
           "perplexity infeasible for row " + std::to_string(i) + ": reached " +
               std::to_string(std::exp(h)) + " instead of " + std::to_string(perplexity) +
               " (too many duplicate points?)");
    }
    a.row_sigmas[i] = std::sqrt(1.0 / (2.0 * beta));
  }

  a.p.assign(n * n, 0.0);
  const double denom = 2.0 * static_cast<double>(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double v =
          std::max((a.conditional[i * n + j] + a.conditional[j * n + i]) / denom, min_prob);
      a.p[i * n + j] = v;
      a.p[j * n + i] = v;
      total += 2.0 * v;
    }
  }
  for (auto& v : a.p) v /= total;
  return a;
}

double tsne_kl(const AffinityMatrix& a, std::span<const Point2> y) {
  const std::size_t n = a.n;
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = y[i].x - y[j].x;
      const double dy = y[i].y - y[j].y;
      z += 2.0 / (1.0 + dx * dx + dy * dy);
    }
  }
  double kl = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double p = a.p[i * n + j];
      if (p <= 0.0) continue;
      const double dx = y[i].x - y[j].x;
      const double dy = y[i].y - y[j].y;
      const double q = 1.0 / (1.0 + dx * dx + dy * dy) / z;
      kl += p * std::log(p / q);
    }
  }
  return kl;
}

namespace {

// Gradient of KL with P scaled by `exaggeration`. `num` is scratch space of
// size n*n receiving the Student-t kernel values.
void kl_gradient(const AffinityMatrix& a, std::span<const Point2> y, double exaggeration,
                 std::vector<double>& num, std::span<double> grad) {
  const std::size_t n = a.n;
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    num[i * n + i] = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = y[i].x - y[j].x;
      const double dy = y[i].y - y[j].y;
      const double k = 1.0 / (1.0 + dx * dx + dy * dy);
      num[i * n + j] = k;
      num[j * n + i] = k;
      z += 2.0 * k;
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    double gx = 0.0;
    double gy = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double k = num[i * n + j];
      const double mult = (exaggeration * a.p[i * n + j] - k / z) * k;
      gx += mult * (y[i].x - y[j].x);
      gy += mult * (y[i].y - y[j].y);
    }
    grad[2 * i] = 4.0 * gx;
    grad[2 * i + 1] = 4.0 * gy;
  }
}

}  // namespace

std::vector<double> tsne_gradient(const AffinityMatrix& a, std::span<const Point2> y) {
  std::vector<double> num(a.n * a.n);
  std::vector<double> grad(2 * a.n);
  kl_gradient(a, y, 1.0, num, grad);
  return grad;
}

Layout2D tsne_fit(const EmbeddingMatrix& x_in, const TsneParams& params) {
  params.validate();
  const EmbeddingMatrix x = x_in.metric_hint() == Metric::kCosine ? x_in.normalized() : x_in;
  const AffinityMatrix a = pairwise_affinities(x, params.perplexity, params.min_prob);
  const std::size_t n = a.n;

  Rng rng(params.seed);
  std::vector<Point2> y(n);
  for (auto& pt : y) {
    pt.x = 1e-4 * rng.normal();
    pt.y = 1e-4 * rng.normal();
  }

  std::vector<double> update(2 * n, 0.0);
  std::vector<double> gains(2 * n, 1.0);
  std::vector<double> grad(2 * n, 0.0);
  std::vector<double> num(n * n, 0.0);
  constexpr double kMinGain = 0.01;

  Layout2D out;
  out.seed = params.seed;
  for (int iter = 1; iter <= params.iterations; ++iter) {
    const bool exaggerating = iter <= params.early_exaggeration_iters;
    const double exaggeration = exaggerating ? params.early_exaggeration : 1.0;
    const double momentum = exaggerating ? params.momentum : params.final_momentum;
    kl_gradient(a, y, exaggeration, num, grad);

    for (std::size_t k = 0; k < 2 * n; ++k) {
      if (!std::isfinite(grad[k])) {
        fail(ErrorCode::kNumerical,
             "non-finite t-SNE gradient at iteration " + std::to_string(iter));
      }
      const bool opposed = update[k] * grad[k] < 0.0;
      gains[k] = opposed ? gains[k] + 0.2 : std::max(gains[k] * 0.8, kMinGain);
      update[k] = momentum * update[k] - params.learning_rate * gains[k] * grad[k];
    }
    double cx = 0.0;
    double cy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i].x += update[2 * i];
      y[i].y += update[2 * i + 1];
      cx += y[i].x;
      cy += y[i].y;
    }
    cx /= static_cast<double>(n);
    cy /= static_cast<double>(n);
    for (auto& pt : y) {
      pt.x -= cx;
      pt.y -= cy;
    }
    if (iter % params.kl_every == 0 || iter == params.iterations) {
      out.kl_trace.push_back({iter, tsne_kl(a, y)});
    }
  }
  out.coords = std::move(y);
  out.roles.assign(n, PointRole{Split::kTrain, std::nullopt});
  return out;
}

Layout2D joint_layout(const EmbeddingMatrix& train, const EmbeddingMatrix& query,
                      const TsneParams& params,
                      std::span<const std::optional<double>> train_labels) {
  if (train.cols() != query.cols()) {
    fail(ErrorCode::kInvalidArgument,
         "dimension mismatch: train d=" + std::to_string(train.cols()) +
             ", query d=" + std::to_string(query.cols()));
  }
  std::vector<double> values = train.values();
  values.insert(values.end(), query.values().begin(), query.values().end());
  std::vector<std::string> ids = train.sample_ids();
  ids.insert(ids.end(), query.sample_ids().begin(), query.sample_ids().end());
  const EmbeddingMatrix joint(train.rows() + query.rows(), train.cols(), std::move(values),
                              std::move(ids), train.metric_hint());
  Layout2D layout = tsne_fit(joint, params);
  for (std::size_t i = 0; i < layout.size(); ++i) {
    if (i < train.rows()) {
      layout.roles[i].split = Split::kTrain;
      if (i < train_labels.size()) layout.roles[i].label = train_labels[i];
    } else {
      layout.roles[i] = PointRole{Split::kQuery, std::nullopt};
    }
  }
  return layout;
}

Layout2D joint_layout(const EmbeddingMatrix& train, const TsneParams& params,
                      std::span<const std::optional<double>> train_labels) {
  Layout2D layout = tsne_fit(train, params);
  for (std::size_t i = 0; i < layout.size() && i < train_labels.size(); ++i) {
    layout.roles[i].label = train_labels[i];
  }
  return layout;
}

std::string Layout2D::to_json() const {
  nlohmann::json j;
  j["coords"] = nlohmann::json::array();
  for (const auto& c : coords) j["coords"].push_back({c.x, c.y});
  j["roles"] = nlohmann::json::array();
  for (const auto& r : roles) {
    nlohmann::json role = {{"role", to_string(r.split)}};
    if (r.label) role["label"] = *r.label;
    j["roles"].push_back(std::move(role));
  }
  j["kl_trace"] = nlohmann::json::array();
  for (const auto& k : kl_trace) j["kl_trace"].push_back({k.iteration, k.kl});
  j["seed"] = seed;
  return j.dump();
}

}  // namespace marvis
