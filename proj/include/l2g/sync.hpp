#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <string>
#include <vector>

#include "l2g/cg.hpp"
#include "l2g/common.hpp"
#include "l2g/embedding.hpp"
#include "l2g/graph.hpp"
#include "l2g/lanczos.hpp"
#include "l2g/partition.hpp"
#include "l2g/patch_graph.hpp"
#include "l2g/procrustes.hpp"

// Patch alignment by group synchronization, in three stages:
//
//   1. (optional) scale synchronization: relative scales r_ij from the
//      Frobenius norms of the centred overlaps, then the leading eigenvector
//      of the weighted consistency matrix, found by power iteration.
//   2. orthogonal synchronization: relative rotations R_ij from Procrustes
//      alignment of the overlaps, then the d leading eigenvectors of the
//      pd x pd block consistency matrix (computed on its symmetrized
//      similar form), each d x d block projected to the nearest orthogonal
//      matrix.
//   3. translation synchronization: least squares on the patch-graph
//      incidence system, solved by conjugate gradient on the normal
//      equations (the patch-graph Laplacian).
//
// The stitched embedding is the per-node centroid of the aligned patches.
// Gauge conventions: scales have mean 1, translations have zero column
// means, the rotation gauge is whatever the eigenbasis yields.

namespace l2g {

struct RelativeTransforms {
  // parallel to the patch-graph edge list; the stored direction is i -> j
  // with i < j, so r_ji = 1/r_ij and R_ji = R_ij^T
  std::vector<double> scales;
  std::vector<Matrix> rotations;
  std::vector<double> weights;  // |P_i /\ P_j|
};

struct AlignDiagnostics {
  int scale_iterations = 0;
  double scale_residual = 0.0;
  std::vector<double> rotation_residuals;
  double translation_relative_residual = 0.0;
  double lsq_residual = 0.0;  // ||B T - C||_F of the solved system
  double seconds_estimate = 0.0;
  double seconds_scale = 0.0;
  double seconds_rotation = 0.0;
  double seconds_translation = 0.0;
  double seconds_stitch = 0.0;
};

struct AlignmentResult {
  Vector scales;                  // p, mean 1
  std::vector<Matrix> rotations;  // p orthogonal d x d matrices
  Matrix translations;            // p x d, zero column means
  std::vector<Matrix> aligned;    // per-patch coordinates after all stages
  EmbeddingMatrix stitched;
  AlignDiagnostics diag;
};

struct AlignOptions {
  bool scale_sync = false;
  std::uint64_t seed = 0;
  double eigen_tol = 1e-10;
  int power_iteration_cap = 100000;
  int lanczos_depth = 350;
};

namespace detail {

inline Matrix overlap_block(const Patch& patch, const std::vector<NodeId>& overlap) {
  Matrix block(overlap.size(), patch.coords.cols());
  for (std::size_t r = 0; r < overlap.size(); ++r) {
    const Index row = patch.local_index(overlap[r]);
    if (row < 0) fail_data("overlap node " + std::to_string(overlap[r]) + " missing from patch");
    block.row(r) = patch.coords.row(row);
  }
  return block;
}

inline double now_seconds() {
  return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

}  // namespace detail

/// Estimate relative transforms on every patch edge. Edges are expected to
/// satisfy the minimum overlap condition already (see align_patches for the
/// filtering step).
inline RelativeTransforms estimate_relative_transforms(const PatchGraph& pg, bool with_scales) {
  RelativeTransforms t;
  t.scales.reserve(pg.edges.size());
  t.rotations.reserve(pg.edges.size());
  t.weights.reserve(pg.edges.size());
  for (const auto& e : pg.edges) {
    const Matrix xi = detail::overlap_block(pg.patches[e.i], e.overlap);
    const Matrix xj = detail::overlap_block(pg.patches[e.j], e.overlap);
    t.scales.push_back(with_scales ? estimate_relative_scale(xi, xj) : 1.0);
    t.rotations.push_back(estimate_relative_rotation(xi, xj));
    t.weights.push_back(static_cast<double>(e.overlap.size()));
  }
  return t;
}

/// Leading eigenvector of the matrix with entries w_ij r_ij / sum_j w_ij,
/// by power iteration on the shifted operator (the shift breaks the
/// periodicity of bipartite-like patch graphs without moving the
/// eigenvector). Returns strictly positive scales normalized to mean 1.
inline Vector synchronize_scales(const PatchGraph& pg, const RelativeTransforms& t,
                                 AlignDiagnostics* diag = nullptr,
                                 const AlignOptions& opt = {}) {
  const Index p = pg.num_patches();
  if (p == 1) return Vector::Ones(1);
  if (!pg.connected()) fail_data("scale synchronization needs a connected patch graph");

  Vector degree = Vector::Zero(p);
  for (std::size_t e = 0; e < pg.edges.size(); ++e) {
    degree[pg.edges[e].i] += t.weights[e];
    degree[pg.edges[e].j] += t.weights[e];
  }

  const auto apply = [&](const Vector& x, Vector& y) {
    y.setZero();
    for (std::size_t e = 0; e < pg.edges.size(); ++e) {
      const Index i = pg.edges[e].i, j = pg.edges[e].j;
      const double w = t.weights[e], r = t.scales[e];
      y[i] += w * r * x[j];
      y[j] += w / r * x[i];
    }
    y.array() /= degree.array();
  };

  Vector v = Vector::Ones(p) / std::sqrt(static_cast<double>(p));
  Vector mv(p), next(p);
  double change = 1.0, residual = 1.0;
  int iter = 0;
  while (iter < opt.power_iteration_cap) {
    ++iter;
    apply(v, mv);
    next = v + mv;
    next /= next.norm();
    change = (next - v).lpNorm<Eigen::Infinity>();
    v = next;
    if (change <= opt.eigen_tol) {
      apply(v, mv);
      const double lambda = v.dot(mv);
      residual = (mv - lambda * v).lpNorm<Eigen::Infinity>();
      if (residual <= 10 * opt.eigen_tol) break;
    }
  }
  if (change > opt.eigen_tol) {
    fail_numerical("scale synchronization did not converge: eigenvector change " +
                   std::to_string(change) + " after " + std::to_string(iter) +
                   " iterations (residual " + std::to_string(residual) + ")");
  }
  if (diag) {
    diag->scale_iterations = iter;
    diag->scale_residual = residual;
  }

  v /= v.mean();
  if ((v.array() <= 0.0).any()) {
    fail_numerical("scale synchronization produced a non-positive scale");
  }
  return v;
}

/// d leading eigenvectors of the block consistency matrix (computed on the
/// symmetrized similar matrix, by Lanczos with full reorthogonalization),
/// each block projected to the nearest orthogonal transformation.
inline std::vector<Matrix> synchronize_rotations(const PatchGraph& pg,
                                                 const RelativeTransforms& t,
                                                 AlignDiagnostics* diag = nullptr,
                                                 const AlignOptions& opt = {}) {
  const Index p = pg.num_patches();
  const Index d = t.rotations.empty() ? pg.dim() : t.rotations.front().cols();
  if (p == 1) return {Matrix::Identity(d, d)};
  if (!pg.connected()) fail_data("rotation synchronization needs a connected patch graph");

  Vector degree = Vector::Zero(p);
  for (std::size_t e = 0; e < pg.edges.size(); ++e) {
    degree[pg.edges[e].i] += t.weights[e];
    degree[pg.edges[e].j] += t.weights[e];
  }
  Vector inv_sqrt_degree = degree.array().rsqrt();

  // y = D^-1/2 B D^-1/2 x with B the block matrix of w_ij R_ij
  const auto apply = [&](const Vector& x, Vector& y) {
    y.setZero();
    for (std::size_t e = 0; e < pg.edges.size(); ++e) {
      const Index i = pg.edges[e].i, j = pg.edges[e].j;
      const double w = t.weights[e] * inv_sqrt_degree[i] * inv_sqrt_degree[j];
      const auto& r = t.rotations[e];
      y.segment(i * d, d) += w * (r * x.segment(j * d, d));
      y.segment(j * d, d) += w * (r.transpose() * x.segment(i * d, d));
    }
  };

  const EigenPairs pairs = lanczos_largest(apply, p * d, static_cast<int>(d), opt.eigen_tol,
                                           opt.lanczos_depth, opt.seed);
  if (diag) diag->rotation_residuals = pairs.residuals;

  std::vector<Matrix> rotations(p);
  for (Index i = 0; i < p; ++i) {
    // map back through the similarity transform, then project
    Matrix block(d, d);
    for (Index c = 0; c < d; ++c) {
      block.col(c) = pairs.vectors.col(c).segment(i * d, d) * inv_sqrt_degree[i];
    }
    double min_singular = 0.0;
    rotations[i] = nearest_orthogonal(block, &min_singular);
    if (min_singular < 1e-8) {
      fail_numerical("rotation synchronization: eigenvector block of patch " + std::to_string(i) +
                     " is nearly singular (sigma_min " + std::to_string(min_singular) + ")");
    }
  }
  return rotations;
}

/// Minimum-norm least-squares translations from the incidence system of the
/// patch graph: normal-equations CG on the unweighted patch Laplacian,
/// gauge-fixed to zero column means. `rotated` holds the per-patch
/// coordinates after scale and rotation synchronization.
inline Matrix synchronize_translations(const PatchGraph& pg, const std::vector<Matrix>& rotated,
                                       AlignDiagnostics* diag = nullptr,
                                       const AlignOptions& opt = {}) {
  const Index p = pg.num_patches();
  const Index d = rotated.empty() ? 0 : rotated.front().cols();
  if (p == 1) return Matrix::Zero(1, d);
  if (!pg.connected()) fail_data("translation synchronization needs a connected patch graph");

  Matrix c(pg.edges.size(), d);
  for (std::size_t e = 0; e < pg.edges.size(); ++e) {
    const auto& edge = pg.edges[e];
    RowVector mean_diff = RowVector::Zero(d);
    for (NodeId id : edge.overlap) {
      const Index ri = pg.patches[edge.i].local_index(id);
      const Index rj = pg.patches[edge.j].local_index(id);
      mean_diff += rotated[edge.i].row(ri) - rotated[edge.j].row(rj);
    }
    mean_diff /= static_cast<double>(edge.overlap.size());
    c.row(e) = mean_diff;
  }

  Vector node_degree = Vector::Zero(p);
  for (const auto& e : pg.edges) {
    node_degree[e.i] += 1.0;
    node_degree[e.j] += 1.0;
  }
  const auto laplacian = [&](const Vector& x, Vector& y) {
    y = node_degree.asDiagonal() * x;
    for (const auto& e : pg.edges) {
      y[e.i] -= x[e.j];
      y[e.j] -= x[e.i];
    }
  };

  Matrix translations(p, d);
  double worst_rel = 0.0;
  for (Index col = 0; col < d; ++col) {
    Vector rhs = Vector::Zero(p);
    for (std::size_t e = 0; e < pg.edges.size(); ++e) {
      rhs[pg.edges[e].i] -= c(e, col);
      rhs[pg.edges[e].j] += c(e, col);
    }
    Vector x(p);
    const CgResult res = conjugate_gradient(laplacian, rhs, x, opt.eigen_tol,
                                            static_cast<int>(20 * p + 200));
    worst_rel = std::max(worst_rel, res.relative_residual);
    translations.col(col) = x;
  }
  translations.rowwise() -= translations.colwise().mean().eval();

  if (diag) {
    diag->translation_relative_residual = worst_rel;
    double lsq = 0.0;
    for (std::size_t e = 0; e < pg.edges.size(); ++e) {
      lsq += (translations.row(pg.edges[e].j) - translations.row(pg.edges[e].i) - c.row(e))
                 .squaredNorm();
    }
    diag->lsq_residual = std::sqrt(lsq);
  }
  return translations;
}

/// Per-node centroid of the aligned patch coordinates (plus translations).
inline EmbeddingMatrix stitch_centroid(const PatchGraph& pg, const std::vector<Matrix>& aligned,
                                       const Matrix& translations) {
  std::vector<NodeId> ids;
  for (const auto& patch : pg.patches) ids.insert(ids.end(), patch.ids.begin(), patch.ids.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  const Index d = aligned.empty() ? 0 : aligned.front().cols();
  Matrix coords = Matrix::Zero(ids.size(), d);
  std::vector<double> count(ids.size(), 0.0);
  for (Index k = 0; k < pg.num_patches(); ++k) {
    const auto& patch = pg.patches[k];
    for (Index r = 0; r < patch.size(); ++r) {
      const Index row = static_cast<Index>(
          std::lower_bound(ids.begin(), ids.end(), patch.ids[r]) - ids.begin());
      coords.row(row) += aligned[k].row(r) + translations.row(k);
      count[row] += 1.0;
    }
  }
  for (std::size_t r = 0; r < ids.size(); ++r) coords.row(r) /= count[r];
  return EmbeddingMatrix(std::move(coords), std::move(ids));
}

/// The full three-stage alignment. Patch edges whose overlap is below d+1
/// cannot carry a transform estimate and are dropped up front; the filtered
/// patch graph must be connected.
inline AlignmentResult align_patches(const PatchGraph& pg_in, const AlignOptions& opt = {}) {
  for (Index k = 0; k < pg_in.num_patches(); ++k) {
    if (!pg_in.patches[k].has_coords()) {
      fail_data("align: patch " + std::to_string(k) + " has no coordinates");
    }
    if (pg_in.patches[k].coords.rows() != pg_in.patches[k].size()) {
      fail_data("align: patch " + std::to_string(k) + " coordinate rows do not match its nodes");
    }
  }
  const Index d = pg_in.dim();
  for (Index k = 0; k < pg_in.num_patches(); ++k) {
    if (pg_in.patches[k].coords.cols() != d) {
      fail_data("align: patch " + std::to_string(k) + " has dimension " +
                std::to_string(pg_in.patches[k].coords.cols()) + ", expected " + std::to_string(d));
    }
  }

  PatchGraph pg;
  pg.patches = pg_in.patches;
  for (const auto& e : pg_in.edges) {
    if (static_cast<Index>(e.overlap.size()) >= d + 1) pg.edges.push_back(e);
  }
  if (!pg.connected()) {
    fail_data("align: patch graph is disconnected once overlaps below d+1 are removed");
  }

  const Index p = pg.num_patches();
  AlignmentResult result;

  double t0 = detail::now_seconds();
  const RelativeTransforms transforms = estimate_relative_transforms(pg, opt.scale_sync);
  result.diag.seconds_estimate = detail::now_seconds() - t0;

  t0 = detail::now_seconds();
  result.scales = opt.scale_sync ? synchronize_scales(pg, transforms, &result.diag, opt)
                                 : Vector::Ones(p);
  result.diag.seconds_scale = detail::now_seconds() - t0;

  t0 = detail::now_seconds();
  result.rotations = synchronize_rotations(pg, transforms, &result.diag, opt);
  result.diag.seconds_rotation = detail::now_seconds() - t0;

  // scales are the estimated magnifications, so they divide out; rotations
  // apply on the right in the row-vector convention
  result.aligned.resize(p);
  for (Index k = 0; k < p; ++k) {
    result.aligned[k] = (pg.patches[k].coords / result.scales[k]) * result.rotations[k];
  }

  t0 = detail::now_seconds();
  result.translations = synchronize_translations(pg, result.aligned, &result.diag, opt);
  result.diag.seconds_translation = detail::now_seconds() - t0;

  t0 = detail::now_seconds();
  result.stitched = stitch_centroid(pg, result.aligned, result.translations);
  result.diag.seconds_stitch = detail::now_seconds() - t0;

  for (Index k = 0; k < p; ++k) {
    result.aligned[k].rowwise() += result.translations.row(k);
  }
  return result;
}

/// Two-level alignment: cluster the patch graph, align within each cluster,
/// then align the per-cluster stitched embeddings as super-patches. The
/// reported transforms are the per-patch compositions, renormalized so the
/// scales keep mean 1.
inline AlignmentResult hierarchical_align(const PatchGraph& pg, Index num_clusters,
                                          const AlignOptions& opt = {}) {
  if (num_clusters < 1) fail_config("hierarchical align: cluster count must be at least 1");
  const Index p = pg.num_patches();
  const Index d = pg.dim();
  if (num_clusters > p) {
    fail_config("hierarchical align: more clusters than patches");
  }

  // partition the patch graph itself
  std::vector<std::pair<NodeId, NodeId>> meta_edges;
  std::vector<NodeId> meta_nodes(p);
  for (Index k = 0; k < p; ++k) meta_nodes[k] = static_cast<NodeId>(k);
  for (const auto& e : pg.edges) {
    meta_edges.emplace_back(static_cast<NodeId>(e.i), static_cast<NodeId>(e.j));
  }
  const SparseGraph meta = SparseGraph::undirected(std::move(meta_edges), std::move(meta_nodes));
  const Partition clustering = fennel_partition(meta, num_clusters, {});

  std::vector<AlignmentResult> cluster_results(num_clusters);
  std::vector<std::vector<Index>> cluster_patches(num_clusters);
  for (Index c = 0; c < num_clusters; ++c) {
    for (Index v : clustering.clusters[c]) {
      cluster_patches[c].push_back(static_cast<Index>(meta.node_id(v)));
    }
    std::sort(cluster_patches[c].begin(), cluster_patches[c].end());

    PatchGraph sub;
    std::vector<Index> local(p, -1);
    for (std::size_t i = 0; i < cluster_patches[c].size(); ++i) {
      local[cluster_patches[c][i]] = static_cast<Index>(i);
      sub.patches.push_back(pg.patches[cluster_patches[c][i]]);
    }
    for (const auto& e : pg.edges) {
      if (local[e.i] >= 0 && local[e.j] >= 0) {
        sub.edges.push_back({std::min(local[e.i], local[e.j]), std::max(local[e.i], local[e.j]),
                             e.overlap});
      }
    }
    if (!sub.connected()) {
      fail_data("hierarchical align: patch-graph cluster " + std::to_string(c) +
                " is internally disconnected");
    }
    cluster_results[c] = align_patches(sub, opt);
  }

  // super-patches: cluster node sets with the per-cluster stitched coords
  PatchGraph super;
  super.patches.resize(num_clusters);
  for (Index c = 0; c < num_clusters; ++c) {
    const auto& emb = cluster_results[c].stitched;
    super.patches[c].ids = emb.ids();
    super.patches[c].coords = emb.coords();
  }
  std::vector<std::pair<Index, Index>> cross;
  for (const auto& e : pg.edges) {
    Index a = clustering.assignment[e.i], b = clustering.assignment[e.j];
    if (a == b) continue;
    if (a > b) std::swap(a, b);
    cross.emplace_back(a, b);
  }
  std::sort(cross.begin(), cross.end());
  cross.erase(std::unique(cross.begin(), cross.end()), cross.end());
  for (const auto& [a, b] : cross) super.edges.push_back({a, b, {}});
  super.recompute_overlaps();
  for (const auto& e : super.edges) {
    if (static_cast<Index>(e.overlap.size()) < d + 1) {
      fail_data("hierarchical align: super-patches " + std::to_string(e.i) + " and " +
                std::to_string(e.j) + " overlap on " + std::to_string(e.overlap.size()) +
                " nodes, fewer than d+1");
    }
  }

  AlignmentResult top = align_patches(super, opt);

  // compose per-patch transforms with the super-stage transform of their
  // cluster, then renormalize the scales to mean 1
  AlignmentResult result;
  result.diag = top.diag;
  result.scales = Vector(p);
  result.rotations.resize(p);
  result.translations = Matrix(p, d);
  result.aligned.resize(p);
  for (Index c = 0; c < num_clusters; ++c) {
    const auto& inner = cluster_results[c];
    for (std::size_t i = 0; i < cluster_patches[c].size(); ++i) {
      const Index k = cluster_patches[c][i];
      result.scales[k] = inner.scales[i] * top.scales[c];
      result.rotations[k] = inner.rotations[i] * top.rotations[c];
      result.translations.row(k) =
          (inner.translations.row(i) / top.scales[c]) * top.rotations[c] +
          top.translations.row(c);
      result.aligned[k] = (inner.aligned[i] / top.scales[c]) * top.rotations[c];
      result.aligned[k].rowwise() += top.translations.row(c);
    }
  }

  const double mean_scale = result.scales.mean();
  result.scales /= mean_scale;
  result.translations *= mean_scale;
  for (auto& a : result.aligned) a *= mean_scale;
  Matrix stitched_coords = top.stitched.coords() * mean_scale;
  result.stitched = EmbeddingMatrix(std::move(stitched_coords), top.stitched.ids());
  return result;
}

}  // namespace l2g
