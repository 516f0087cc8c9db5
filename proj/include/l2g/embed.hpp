#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "l2g/common.hpp"
#include "l2g/embedding.hpp"
#include "l2g/graph.hpp"
#include "l2g/lanczos.hpp"
#include "l2g/patch_graph.hpp"

namespace l2g {

namespace detail {

// largest-magnitude entry of each left column made positive, for
// reproducibility; paired columns flip together
inline void fix_column_signs(Matrix& left, Matrix* right = nullptr) {
  for (Index c = 0; c < left.cols(); ++c) {
    Index arg = 0;
    left.col(c).cwiseAbs().maxCoeff(&arg);
    if (left(arg, c) < 0.0) {
      left.col(c) = -left.col(c);
      if (right) right->col(c) = -right->col(c);
    }
  }
}

}  // namespace detail

struct BipartiteEmbedding {
  EmbeddingMatrix sources;       // X = D_s^-1/2 U
  EmbeddingMatrix destinations;  // Y = D_d^-1/2 V
  Vector singular_values;
};

/// SVD embedding of a bipartite-directed graph: the d leading singular
/// triplets of the degree-normalized adjacency D_s^-1/2 A D_d^-1/2 in the
/// complement of the trivial pair (sqrt-degree vectors), kept out by
/// deflation inside the bidiagonalization. Coordinate rows are scaled back
/// by the inverse square-root degrees.
inline BipartiteEmbedding svd_bipartite_embed(const SparseGraph& g, Index d,
                                              std::uint64_t seed = 0) {
  if (g.mode() != GraphMode::bipartite) fail_config("svd embedding expects a bipartite graph");
  const Index ns = g.num_nodes(), nd = g.num_cols();
  if (d >= std::min(ns, nd) - 1) {
    fail_config("svd embedding: dimension " + std::to_string(d) +
                " too large for " + std::to_string(ns) + " sources x " + std::to_string(nd) +
                " destinations");
  }
  if (d < 1) fail_config("svd embedding: dimension must be positive");

  Vector inv_sqrt_ds(ns), inv_sqrt_dd(nd);
  for (Index i = 0; i < ns; ++i) inv_sqrt_ds[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(i)));
  for (Index j = 0; j < nd; ++j) {
    inv_sqrt_dd[j] = 1.0 / std::sqrt(static_cast<double>(g.in_degree(j)));
  }

  const auto apply = [&](const Vector& x, Vector& y) {
    y.setZero();
    for (Index i = 0; i < ns; ++i) {
      double acc = 0.0;
      for (Index j : g.neighbors(i)) acc += x[j] * inv_sqrt_dd[j];
      y[i] = acc * inv_sqrt_ds[i];
    }
  };
  const auto apply_t = [&](const Vector& x, Vector& y) {
    y.setZero();
    for (Index i = 0; i < ns; ++i) {
      const double xi = x[i] * inv_sqrt_ds[i];
      for (Index j : g.neighbors(i)) y[j] += xi * inv_sqrt_dd[j];
    }
  };

  // trivial pair: u0 ~ D_s^1/2 1, v0 ~ D_d^1/2 1 with singular value 1
  Vector u0(ns), v0(nd);
  for (Index i = 0; i < ns; ++i) u0[i] = std::sqrt(static_cast<double>(g.degree(i)));
  for (Index j = 0; j < nd; ++j) v0[j] = std::sqrt(static_cast<double>(g.in_degree(j)));
  u0.normalize();
  v0.normalize();

  SingularTriplets triplets =
      gkl_singular_triplets(apply, apply_t, ns, nd, static_cast<int>(d), 1e-9, 250, seed,
                            {u0}, {v0});
  detail::fix_column_signs(triplets.left, &triplets.right);

  Matrix x = triplets.left;
  Matrix y = triplets.right;
  for (Index i = 0; i < ns; ++i) x.row(i) *= inv_sqrt_ds[i];
  for (Index j = 0; j < nd; ++j) y.row(j) *= inv_sqrt_dd[j];

  BipartiteEmbedding out;
  out.sources = EmbeddingMatrix(std::move(x), g.node_ids());
  out.destinations = EmbeddingMatrix(std::move(y), g.col_ids());
  out.singular_values = triplets.values;
  return out;
}

/// Spectral embedding of a connected undirected patch: the d leading
/// nontrivial eigenvectors of D^-1/2 A D^-1/2 with the trivial sqrt-degree
/// vector deflated, rows scaled by D^-1/2.
inline EmbeddingMatrix spectral_embed(const SparseGraph& g, Index d, std::uint64_t seed = 0) {
  if (g.mode() != GraphMode::undirected) fail_config("spectral embedding expects an undirected graph");
  const Index n = g.num_nodes();
  if (d >= n - 1) {
    fail_config("spectral embedding: dimension " + std::to_string(d) + " too large for " +
                std::to_string(n) + " nodes");
  }
  if (d < 1) fail_config("spectral embedding: dimension must be positive");
  {
    const SparseGraph lcc = largest_connected_component(g);
    if (lcc.num_nodes() != n) {
      fail_data("spectral embedding: patch is disconnected (" + std::to_string(n) + " nodes, " +
                std::to_string(lcc.num_nodes()) + " in the largest component)");
    }
  }

  Vector inv_sqrt_deg(n);
  for (Index i = 0; i < n; ++i) inv_sqrt_deg[i] = 1.0 / std::sqrt(static_cast<double>(g.degree(i)));

  const auto apply = [&](const Vector& x, Vector& y) {
    for (Index u = 0; u < n; ++u) {
      double acc = 0.0;
      for (Index v : g.neighbors(u)) acc += x[v] * inv_sqrt_deg[v];
      y[u] = acc * inv_sqrt_deg[u];
    }
  };

  Vector trivial(n);
  for (Index i = 0; i < n; ++i) trivial[i] = std::sqrt(static_cast<double>(g.degree(i)));
  trivial.normalize();

  EigenPairs pairs =
      lanczos_largest(apply, n, static_cast<int>(d), 1e-9, 250, seed, {trivial});
  detail::fix_column_signs(pairs.vectors);

  Matrix coords = pairs.vectors;
  for (Index i = 0; i < n; ++i) coords.row(i) *= inv_sqrt_deg[i];
  return EmbeddingMatrix(std::move(coords), g.node_ids());
}

/// Attach externally produced per-patch coordinate files ("patch_<k>.l2ge"
/// under `dir`, either embedding format). Node sets must match each patch
/// exactly and all files must agree on the dimension.
inline void load_patch_coords(const std::filesystem::path& dir, PatchGraph& pg) {
  Index dim = -1;
  for (Index k = 0; k < pg.num_patches(); ++k) {
    const auto path = dir / ("patch_" + std::to_string(k) + ".l2ge");
    if (!std::filesystem::exists(path)) fail_data("missing coordinate file: " + path.string());
    const EmbeddingMatrix emb = load_embedding(path);
    auto& patch = pg.patches[k];
    if (emb.rows() != patch.size()) {
      fail_data("patch " + std::to_string(k) + ": coordinate file has " +
                std::to_string(emb.rows()) + " rows for " + std::to_string(patch.size()) +
                " patch nodes");
    }
    if (dim < 0) {
      dim = emb.dim();
    } else if (emb.dim() != dim) {
      fail_data("patch " + std::to_string(k) + ": dimension " + std::to_string(emb.dim()) +
                " does not match the other patches (" + std::to_string(dim) + ")");
    }
    for (NodeId id : emb.ids()) {
      if (!patch.contains(id)) {
        fail_data("patch " + std::to_string(k) + ": coordinate file carries node " +
                  std::to_string(id) + " which is not in the patch");
      }
    }
    patch.coords = Matrix(patch.size(), dim);
    for (Index r = 0; r < patch.size(); ++r) {
      if (!emb.contains(patch.ids[r])) {
        fail_data("patch " + std::to_string(k) + ": coordinate file is missing node " +
                  std::to_string(patch.ids[r]));
      }
      patch.coords.row(r) = emb.row(emb.row_of(patch.ids[r]));
    }
  }
}

}  // namespace l2g
