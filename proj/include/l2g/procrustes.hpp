#pragma once

#include <string>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "l2g/common.hpp"

namespace l2g {

/// Nearest orthogonal matrix in Frobenius norm: U V^T from the SVD.
/// `min_singular`, when set, receives the smallest singular value so callers
/// can detect a degenerate projection.
inline Matrix nearest_orthogonal(const Matrix& m, double* min_singular = nullptr) {
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  if (min_singular) *min_singular = svd.singularValues().minCoeff();
  return svd.matrixU() * svd.matrixV().transpose();
}

/// Relative scale of two aligned overlap blocks: the ratio of the Frobenius
/// norms of the centred coordinates (Horn's method). Rotation- and
/// translation-invariant by construction.
inline double estimate_relative_scale(const Matrix& xi, const Matrix& xj) {
  if (xi.rows() != xj.rows() || xi.cols() != xj.cols()) {
    fail_data("relative scale: overlap blocks must have matching shape");
  }
  const Matrix ci = xi.rowwise() - xi.colwise().mean();
  const Matrix cj = xj.rowwise() - xj.colwise().mean();
  const double denom = cj.norm();
  if (denom < 1e-12) fail_data("relative scale: degenerate overlap, all points coincide");
  return ci.norm() / denom;
}

/// Orthogonal d x d matrix R minimizing ||xi_c - xj_c R^T||_F over the
/// centred overlap blocks, from the SVD of the cross-covariance
/// C = xi_c^T xj_c. Reflections are admissible. Errors when the
/// cross-covariance has two or more vanishing singular values (the
/// minimizer is then ambiguous).
inline Matrix estimate_relative_rotation(const Matrix& xi, const Matrix& xj) {
  if (xi.rows() != xj.rows() || xi.cols() != xj.cols()) {
    fail_data("relative rotation: overlap blocks must have matching shape");
  }
  const Index d = xi.cols();
  if (xi.rows() < d + 1) {
    fail_data("relative rotation: need at least d+1 overlap rows, got " +
              std::to_string(xi.rows()));
  }
  const Matrix ci = xi.rowwise() - xi.colwise().mean();
  const Matrix cj = xj.rowwise() - xj.colwise().mean();
  const Eigen::MatrixXd cross = ci.transpose() * cj;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(cross, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  const double tol = 1e-12 * std::max(1.0, sv(0));
  int vanishing = 0;
  for (Index k = 0; k < d; ++k) {
    if (sv(k) < tol) ++vanishing;
  }
  if (vanishing >= 2) {
    fail_data("relative rotation: degenerate overlap, cross-covariance rank " +
              std::to_string(d - vanishing) + " < d-1");
  }
  return svd.matrixU() * svd.matrixV().transpose();
}

}  // namespace l2g
