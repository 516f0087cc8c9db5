#pragma once

#include <cmath>
#include <string>

#include "l2g/common.hpp"

namespace l2g {

struct CgResult {
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Conjugate gradient for a symmetric positive (semi-)definite operator.
/// Starts from x = 0; for a singular Laplacian with a consistent
/// right-hand side this converges to the minimum-norm solution. Throws a
/// numerical error when `rel_tol` is not reached within `max_iter`.
template <typename Op>
CgResult conjugate_gradient(Op&& apply, const Vector& b, Vector& x, double rel_tol, int max_iter) {
  const Index n = b.size();
  x = Vector::Zero(n);
  const double norm_b = b.norm();
  if (norm_b == 0.0) return {0, 0.0};

  Vector r = b;
  Vector p = r;
  Vector Ap(n);
  double rho = r.squaredNorm();

  for (int iter = 1; iter <= max_iter; ++iter) {
    apply(p, Ap);
    const double alpha = rho / p.dot(Ap);
    x += alpha * p;
    r -= alpha * Ap;
    const double rho_next = r.squaredNorm();
    const double rel = std::sqrt(rho_next) / norm_b;
    if (rel <= rel_tol) return {iter, rel};
    p = r + (rho_next / rho) * p;
    rho = rho_next;
  }
  fail_numerical("conjugate gradient did not reach tolerance " + std::to_string(rel_tol) +
                 " in " + std::to_string(max_iter) + " iterations (residual " +
                 std::to_string(std::sqrt(rho) / norm_b) + ")");
}

}  // namespace l2g
