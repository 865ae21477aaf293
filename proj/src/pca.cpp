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

#include <Eigen/Dense>
#include <cmath>

#include "marvis/dimred.hpp"
#include "marvis/error.hpp"

namespace marvis {

PcaProjection pca_project(const EmbeddingMatrix& x, std::size_t dims) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  if (dims == 0 || dims > std::min(n, d)) {
    fail(ErrorCode::kInvalidArgument, "pca dims must lie in [1, min(n, d)] = [1, " +
                                          std::to_string(std::min(n, d)) + "]");
  }
  using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMatrix> data(x.values().data(), static_cast<Eigen::Index>(n),
                                         static_cast<Eigen::Index>(d));
  const Eigen::RowVectorXd mean = data.colwise().mean();
  const Eigen::MatrixXd centered = data.rowwise() - mean;
  const Eigen::MatrixXd cov =
      (centered.transpose() * centered) / static_cast<double>(n);

  // Eigenvalues come back ascending.
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) {
    fail(ErrorCode::kNumerical, "covariance eigendecomposition failed");
  }

  PcaProjection out;
  out.rows = n;
  out.dims = dims;
  out.mean.assign(mean.data(), mean.data() + d);
  out.eigenvalues.resize(d);
  for (std::size_t k = 0; k < d; ++k) {
    out.eigenvalues[k] = std::max(0.0, solver.eigenvalues()(static_cast<Eigen::Index>(d - 1 - k)));
  }
  Eigen::MatrixXd basis(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(dims));
  for (std::size_t k = 0; k < dims; ++k) {
    Eigen::VectorXd v = solver.eigenvectors().col(static_cast<Eigen::Index>(d - 1 - k));
    Eigen::Index arg = 0;
    for (Eigen::Index r = 1; r < v.size(); ++r) {
      if (std::abs(v(r)) > std::abs(v(arg))) arg = r;
    }
    if (v(arg) < 0.0) v = -v;
    basis.col(static_cast<Eigen::Index>(k)) = v;
  }
  out.components.resize(dims * d);
  for (std::size_t k = 0; k < dims; ++k) {
    for (std::size_t j = 0; j < d; ++j) {
      out.components[k * d + j] =
          basis(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(k));
    }
  }
  const Eigen::MatrixXd projected = centered * basis;
  out.coords.resize(n * dims);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < dims; ++k) {
      out.coords[i * dims + k] =
          projected(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
    }
  }
  return out;
}

}  // namespace marvis
