#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "l2g/cg.hpp"
#include "l2g/common.hpp"
#include "l2g/patch_graph.hpp"
#include "l2g/rng.hpp"

namespace l2g {

namespace detail {

struct UnionFind {
  std::vector<Index> parent;
  explicit UnionFind(Index n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  Index find(Index x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(Index a, Index b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[b] = a;
    return true;
  }
};

// weighted Laplacian matvec of the patch graph
struct PatchLaplacian {
  const PatchGraph& pg;
  std::span<const double> weights;
  void operator()(const Vector& x, Vector& y) const {
    y.setZero();
    for (std::size_t e = 0; e < pg.edges.size(); ++e) {
      const Index i = pg.edges[e].i, j = pg.edges[e].j;
      const double w = weights[e];
      const double delta = x[i] - x[j];
      y[i] += w * delta;
      y[j] -= w * delta;
    }
  }
};

}  // namespace detail

/// Effective resistance between two patches in the weighted patch graph,
/// from the Laplacian solve L x = e_i - e_j.
inline double effective_resistance_between(const PatchGraph& pg, std::span<const double> weights,
                                           Index i, Index j) {
  if (!pg.connected()) fail_data("effective resistance needs a connected patch graph");
  const Index p = pg.num_patches();
  Vector b = Vector::Zero(p);
  b[i] = 1.0;
  b[j] = -1.0;
  Vector x(p);
  conjugate_gradient(detail::PatchLaplacian{pg, weights}, b, x, 1e-10,
                     static_cast<int>(20 * p + 200));
  return x[i] - x[j];
}

/// Effective resistance across patch edge `e`.
inline double effective_resistance(const PatchGraph& pg, std::span<const double> weights,
                                   std::size_t e) {
  return effective_resistance_between(pg, weights, pg.edges[e].i, pg.edges[e].j);
}

/// Effective resistances for every patch edge.
inline std::vector<double> effective_resistances(const PatchGraph& pg,
                                                 std::span<const double> weights) {
  std::vector<double> r(pg.edges.size());
  for (std::size_t e = 0; e < pg.edges.size(); ++e) r[e] = effective_resistance(pg, weights, e);
  return r;
}

struct SparsifyOptions {
  bool use_resistance = true;  // off = sample on raw conductance (large-scale fallback)
  bool alg1_literal = false;   // sample (k-1)p+1 extra edges instead of the mean-degree count
  std::uint64_t seed = 0;
};

/// Sparsify the patch graph to mean degree ~k: keep a maximum-weight
/// spanning tree under w = r*c, then sample the remainder without
/// replacement with probability proportional to w until
/// min(|E_p|, ceil(k*p/2)) edges are kept. MST ties go to the
/// lexicographically smallest patch pair; sampling keys on (seed, edge).
inline PatchGraph sparsify_patch_graph(const PatchGraph& pg, const SparseGraph& g,
                                       Index target_degree, const SparsifyOptions& opt = {}) {
  if (target_degree < 2) fail_config("sparsify: target mean degree must be at least 2");
  if (!pg.connected()) fail_data("sparsify: patch graph is disconnected");

  const Index p = pg.num_patches();
  const std::size_t num_edges = pg.edges.size();

  const std::vector<double> conductance = conductance_weights(g, pg);
  std::vector<double> weight = conductance;
  if (opt.use_resistance) {
    const std::vector<double> resistance = effective_resistances(pg, conductance);
    for (std::size_t e = 0; e < num_edges; ++e) weight[e] *= resistance[e];
  }

  const std::size_t target =
      opt.alg1_literal
          ? std::min(num_edges, static_cast<std::size_t>(p - 1 + (target_degree - 1) * p + 1))
          : std::min(num_edges, static_cast<std::size_t>((target_degree * p + 1) / 2));

  std::vector<std::size_t> order(num_edges);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (weight[a] != weight[b]) return weight[a] > weight[b];
    return std::pair{pg.edges[a].i, pg.edges[a].j} < std::pair{pg.edges[b].i, pg.edges[b].j};
  });

  std::vector<char> keep(num_edges, 0);
  detail::UnionFind uf(p);
  std::size_t kept = 0;
  for (std::size_t e : order) {
    if (uf.unite(pg.edges[e].i, pg.edges[e].j)) {
      keep[e] = 1;
      ++kept;
    }
  }

  if (kept < target) {
    // remaining edges ranked by the exponential-sort key for weighted
    // sampling without replacement
    std::vector<std::pair<double, std::size_t>> keys;
    keys.reserve(num_edges - kept);
    for (std::size_t e = 0; e < num_edges; ++e) {
      if (keep[e]) continue;
      Rng rng(opt.seed, Rng::mix(static_cast<std::uint64_t>(pg.edges[e].i) * 0x1f123bb5ull,
                                 static_cast<std::uint64_t>(pg.edges[e].j)));
      double u = rng.uniform();
      while (u <= 0.0) u = rng.uniform();
      keys.emplace_back(-std::log(u) / weight[e], e);
    }
    std::sort(keys.begin(), keys.end());
    for (std::size_t i = 0; i < keys.size() && kept < target; ++i) {
      keep[keys[i].second] = 1;
      ++kept;
    }
  }

  PatchGraph out;
  out.patches = pg.patches;
  for (std::size_t e = 0; e < num_edges; ++e) {
    if (keep[e]) out.edges.push_back(pg.edges[e]);
  }
  return out;
}

}  // namespace l2g
