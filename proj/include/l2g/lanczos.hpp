#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "l2g/common.hpp"
#include "l2g/rng.hpp"

// Sparse symmetric eigensolver and Golub-Kahan-Lanczos bidiagonalization.
//
// Both extract one extreme pair at a time and deflate it before continuing,
// which handles the degenerate clusters that synchronization problems
// produce (a d-fold eigenvalue 1 in the noise-free case). The Krylov basis
// is fully reorthogonalized at every step, against both the previous basis
// vectors and the deflation set.

namespace l2g {

struct EigenPairs {
  Vector values;   // extraction order (algebraically largest first)
  Matrix vectors;  // dim x k, orthonormal columns
  std::vector<double> residuals;
};

namespace detail {

inline void orthogonalize(Vector& w, const std::vector<Vector>& basis, std::size_t count) {
  for (int pass = 0; pass < 2; ++pass) {
    for (std::size_t i = 0; i < count; ++i) w -= basis[i].dot(w) * basis[i];
  }
}

inline void orthogonalize(Vector& w, const std::vector<const Vector*>& set) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const Vector* v : set) w -= v->dot(w) * (*v);
  }
}

}  // namespace detail

/// Largest (algebraic) eigenpairs of a symmetric operator, extracted
/// sequentially with deflation. `deflate` vectors are projected out of the
/// Krylov space entirely. `tol` bounds the Ritz residual ||A v - theta v||;
/// `max_depth` caps the Krylov dimension per pair.
template <typename Op>
EigenPairs lanczos_largest(Op&& apply, Index dim, int num_pairs, double tol, int max_depth,
                           std::uint64_t seed, const std::vector<Vector>& deflate = {}) {
  EigenPairs out;
  out.values = Vector(num_pairs);
  out.vectors = Matrix(dim, num_pairs);
  out.residuals.resize(num_pairs);

  std::vector<Vector> found;
  found.reserve(num_pairs);

  for (int pair = 0; pair < num_pairs; ++pair) {
    std::vector<const Vector*> locked;
    for (const auto& v : deflate) locked.push_back(&v);
    for (const auto& v : found) locked.push_back(&v);
    const Index free_dim = dim - static_cast<Index>(locked.size());
    if (free_dim <= 0) fail_numerical("lanczos: deflation set exhausts the space");
    const int m_cap = static_cast<int>(std::min<Index>(free_dim, max_depth));

    Rng rng(seed, Rng::mix(0x6c616e637aull, static_cast<std::uint64_t>(pair)));
    std::vector<Vector> basis;
    std::vector<double> alpha, beta;
    Vector q(dim);
    for (Index i = 0; i < dim; ++i) q[i] = rng.normal();
    detail::orthogonalize(q, locked);
    const double qn = q.norm();
    if (qn < 1e-12) fail_numerical("lanczos: start vector vanished under deflation");
    basis.push_back(q / qn);

    Vector w(dim);
    double theta = 0.0, residual = 0.0;
    Eigen::VectorXd ritz_coeffs;
    bool converged = false;

    for (int step = 1; step <= m_cap; ++step) {
      apply(basis.back(), w);
      if (step > 1) w -= beta.back() * basis[step - 2];
      alpha.push_back(basis.back().dot(w));
      w -= alpha.back() * basis.back();
      detail::orthogonalize(w, basis, basis.size());
      detail::orthogonalize(w, locked);
      const double b = w.norm();

      Eigen::MatrixXd t = Eigen::MatrixXd::Zero(step, step);
      for (int i = 0; i < step; ++i) t(i, i) = alpha[i];
      for (int i = 0; i + 1 < step; ++i) t(i, i + 1) = t(i + 1, i) = beta[i];
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(t);
      theta = es.eigenvalues()(step - 1);  // ascending order
      ritz_coeffs = es.eigenvectors().col(step - 1);
      residual = b * std::abs(ritz_coeffs(step - 1));

      if (residual <= tol || b < 1e-14) {
        // b ~ 0 means the Krylov space became invariant, so the Ritz pair
        // is exact up to rounding
        converged = true;
        break;
      }
      if (step == m_cap) break;
      beta.push_back(b);
      basis.push_back(w / b);
    }

    if (!converged) {
      fail_numerical("lanczos eigensolver did not converge: Ritz residual " +
                     std::to_string(residual) + " after " + std::to_string(m_cap) +
                     " steps (tolerance " + std::to_string(tol) + ", pair " +
                     std::to_string(pair) + ")");
    }

    Vector ritz = Vector::Zero(dim);
    for (int i = 0; i < ritz_coeffs.size(); ++i) ritz += ritz_coeffs(i) * basis[i];
    detail::orthogonalize(ritz, locked);
    const double rn = ritz.norm();
    if (rn < 1e-12) fail_numerical("lanczos: converged Ritz vector vanished under deflation");
    ritz /= rn;

    out.values(pair) = theta;
    out.vectors.col(pair) = ritz;
    out.residuals[pair] = residual;
    found.push_back(std::move(ritz));
  }
  return out;
}

struct SingularTriplets {
  Vector values;  // extraction order (largest first)
  Matrix left;    // rows x k
  Matrix right;   // cols x k
  std::vector<double> residuals;
};

/// Leading singular triplets of a linear operator given by apply/apply_t,
/// one at a time with deflation. The `deflate_left` / `deflate_right`
/// vectors are projected out of the bidiagonalization entirely (the trivial
/// pair of a normalized adjacency goes here). A leading singular value
/// below `rank_floor` raises a rank-deficiency error.
template <typename OpA, typename OpAt>
SingularTriplets gkl_singular_triplets(OpA&& apply, OpAt&& apply_t, Index rows, Index cols,
                                       int num, double tol, int max_depth, std::uint64_t seed,
                                       const std::vector<Vector>& deflate_left,
                                       const std::vector<Vector>& deflate_right,
                                       double rank_floor = 1e-10) {
  SingularTriplets out;
  out.values = Vector(num);
  out.left = Matrix(rows, num);
  out.right = Matrix(cols, num);
  out.residuals.resize(num);

  std::vector<Vector> found_u, found_v;

  for (int triplet = 0; triplet < num; ++triplet) {
    std::vector<const Vector*> locked_u, locked_v;
    for (const auto& v : deflate_left) locked_u.push_back(&v);
    for (const auto& v : found_u) locked_u.push_back(&v);
    for (const auto& v : deflate_right) locked_v.push_back(&v);
    for (const auto& v : found_v) locked_v.push_back(&v);

    const Index free_dim = std::min(rows - static_cast<Index>(locked_u.size()),
                                    cols - static_cast<Index>(locked_v.size()));
    if (free_dim <= 0) {
      fail_numerical("bidiagonalization: requested more singular triplets than the deflated "
                     "space holds");
    }
    const int m_cap = static_cast<int>(std::min<Index>(free_dim, max_depth));

    Rng rng(seed, Rng::mix(0x676b6cull, static_cast<std::uint64_t>(triplet)));
    std::vector<Vector> us, vs;
    std::vector<double> alphas, betas;

    Vector v0(cols);
    for (Index i = 0; i < cols; ++i) v0[i] = rng.normal();
    detail::orthogonalize(v0, locked_v);
    const double v0n = v0.norm();
    if (v0n < 1e-12) fail_numerical("bidiagonalization: start vector vanished under deflation");
    vs.push_back(v0 / v0n);

    Vector work_u(rows), work_v(cols);
    double sigma = 0.0, residual = 0.0;
    Eigen::VectorXd y, z;
    bool converged = false;
    bool dead_space = false;

    for (int step = 1; step <= m_cap; ++step) {
      apply(vs.back(), work_u);
      if (step > 1) work_u -= betas.back() * us[step - 2];
      detail::orthogonalize(work_u, us, us.size());
      detail::orthogonalize(work_u, locked_u);
      const double a = work_u.norm();
      if (a < 1e-14) {
        if (step == 1) {
          // the deflated complement maps to (numerical) zero
          dead_space = true;
          break;
        }
        // left space exhausted: the rectangular projection
        // A [v_1..v_s] = [u_1..u_{s-1}] B with B of shape (s-1) x s is
        // exact, so its top triplet is exact too
        Eigen::MatrixXd bd = Eigen::MatrixXd::Zero(step - 1, step);
        for (int i = 0; i + 1 < step; ++i) bd(i, i) = alphas[i];
        for (int i = 0; i + 1 < step; ++i) bd(i, i + 1) = betas[i];
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(bd, Eigen::ComputeFullU | Eigen::ComputeFullV);
        sigma = svd.singularValues()(0);
        y = svd.matrixU().col(0);
        z = svd.matrixV().col(0);
        residual = a;
        converged = true;
        break;
      }
      alphas.push_back(a);
      us.push_back(work_u / a);

      apply_t(us.back(), work_v);
      work_v -= a * vs.back();
      detail::orthogonalize(work_v, vs, vs.size());
      detail::orthogonalize(work_v, locked_v);
      const double b = work_v.norm();

      // upper-bidiagonal projection: diag = alpha, superdiag = beta
      Eigen::MatrixXd bd = Eigen::MatrixXd::Zero(step, step);
      for (int i = 0; i < step; ++i) bd(i, i) = alphas[i];
      for (int i = 0; i + 1 < step; ++i) bd(i, i + 1) = betas[i];
      Eigen::JacobiSVD<Eigen::MatrixXd> svd(bd, Eigen::ComputeFullU | Eigen::ComputeFullV);
      sigma = svd.singularValues()(0);
      y = svd.matrixU().col(0);
      z = svd.matrixV().col(0);
      residual = b * std::abs(y(step - 1));

      if (residual <= tol || b < 1e-14) {
        converged = true;
        break;
      }
      if (step == m_cap) break;
      betas.push_back(b);
      vs.push_back(work_v / b);
    }

    if (dead_space || (converged && sigma < rank_floor)) {
      fail_numerical("rank deficiency: no usable singular direction left while extracting "
                     "triplet " + std::to_string(triplet + 1) + " (leading remaining value " +
                     std::to_string(sigma) + ")");
    }
    if (!converged) {
      fail_numerical("bidiagonalization did not converge: residual " + std::to_string(residual) +
                     " (tolerance " + std::to_string(tol) + ")");
    }

    Vector ritz_u = Vector::Zero(rows), ritz_v = Vector::Zero(cols);
    for (int i = 0; i < y.size(); ++i) ritz_u += y(i) * us[i];
    for (int i = 0; i < z.size(); ++i) ritz_v += z(i) * vs[i];
    detail::orthogonalize(ritz_u, locked_u);
    detail::orthogonalize(ritz_v, locked_v);
    ritz_u.normalize();
    ritz_v.normalize();

    out.values(triplet) = sigma;
    out.left.col(triplet) = ritz_u;
    out.right.col(triplet) = ritz_v;
    out.residuals[triplet] = residual;
    found_u.push_back(std::move(ritz_u));
    found_v.push_back(std::move(ritz_v));
  }
  return out;
}

}  // namespace l2g
