#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "kinface/numerics/rng.hpp"
#include "kinface/numerics/tensor.hpp"

namespace kinface::eval {

struct Projection2d {
  std::vector<std::array<double, 2>> points;
  std::array<double, 2> eigenvalues{};   // of the covariance (divided by rows)
  Eigen::MatrixXd directions;            // d x 2, unit columns
};

/**
 * PCA onto the top two principal directions by power iteration with
 * deflation. The start vectors come from `seed`, so output is repeatable.
 * Rank-1 data yields a zero second eigenvalue and near-zero second coordinates.
 */
template <Real T>
Projection2d project_2d(const Tensor<T>& features, std::uint64_t seed = 0, int max_iterations = 20000) {
  if (features.rank() != 2) throw ShapeError("project_2d: expected [rows, dims]");
  const auto rows = static_cast<Eigen::Index>(features.dim(0)), dims = static_cast<Eigen::Index>(features.dim(1));
  if (rows < 3) throw std::invalid_argument("project_2d: need at least 3 vectors");
  Eigen::MatrixXd x(rows, dims);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < dims; ++j) x(i, j) = static_cast<double>(features[static_cast<std::size_t>(i * dims + j)]);
  x.rowwise() -= x.colwise().mean();
  Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(rows);
  if (cov.trace() <= 0.0) throw std::invalid_argument("project_2d: all vectors are identical");

  Projection2d out;
  out.directions = Eigen::MatrixXd::Zero(dims, 2);
  SeededRng rng(seed);
  const double scale = cov.trace();
  for (int k = 0; k < 2; ++k) {
    Eigen::VectorXd v(dims);
    for (auto& e : v) e = rng.uniform(-1, 1);
    auto orthogonalize = [&](Eigen::VectorXd& u) {
      for (int j = 0; j < k; ++j) u -= out.directions.col(j).dot(u) * out.directions.col(j);
      u.normalize();
    };
    orthogonalize(v);
    double lambda = 0;
    for (int it = 0; it < max_iterations; ++it) {
      Eigen::VectorXd w = cov * v;
      const double norm = w.norm();
      if (norm <= 1e-14 * scale) {  // deflated to nothing: direction is irrelevant
        lambda = 0;
        break;
      }
      orthogonalize(w);
      const double change = (w - v).norm();
      v = w;
      lambda = v.dot(cov * v);
      if (change < 1e-13) break;
    }
    out.eigenvalues[static_cast<std::size_t>(k)] = lambda;
    out.directions.col(k) = v;
    cov -= lambda * v * v.transpose();
  }
  const Eigen::MatrixXd p = x * out.directions;
  out.points.resize(static_cast<std::size_t>(rows));
  for (Eigen::Index i = 0; i < rows; ++i) out.points[static_cast<std::size_t>(i)] = {p(i, 0), p(i, 1)};
  return out;
}

}  // namespace kinface::eval
