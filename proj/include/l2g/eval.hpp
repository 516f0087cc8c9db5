#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "l2g/common.hpp"
#include "l2g/embedding.hpp"
#include "l2g/graph.hpp"
#include "l2g/patch_graph.hpp"
#include "l2g/rng.hpp"

namespace l2g {

struct PatchTransform {
  double scale = 1.0;
  Matrix rotation;        // d x d orthogonal, reflections allowed
  RowVector translation;  // 1 x d
};

/// Ground truth plus a perturbed patch problem built from it; the stored
/// transforms and noise reproduce the patch coordinates exactly.
struct SyntheticProblem {
  EmbeddingMatrix ground_truth;
  PatchGraph patch_graph;
  std::vector<PatchTransform> transforms;
  std::vector<Matrix> noise;
  double sigma = 0.0;
};

namespace detail {

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// R-diagonal sign fix. Reflections occur with probability 1/2.
inline Matrix random_orthogonal(Index d, Rng& rng) {
  Eigen::MatrixXd gauss(d, d);
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j < d; ++j) gauss(i, j) = rng.normal();
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(gauss);
  Eigen::MatrixXd q = qr.householderQ();
  const Eigen::MatrixXd r = qr.matrixQR().triangularView<Eigen::Upper>();
  for (Index j = 0; j < d; ++j) {
    if (r(j, j) < 0.0) q.col(j) = -q.col(j);
  }
  return q;
}

}  // namespace detail

/// Build a synthetic patch problem: standard-normal ground truth, a
/// ring-plus-chords patch cover where every node joins a block of
/// consecutive patches, and per-patch similarity transforms (scale in
/// [0.5, 2], Haar orthogonal, translation in [-10, 10]^d) plus iid normal
/// noise of width sigma.
inline SyntheticProblem generate_synthetic(Index n, Index d, Index p, Index overlap, double sigma,
                                           std::uint64_t seed) {
  if (p < 1) fail_config("synthetic: need at least one patch");
  if (overlap < d + 1) fail_config("synthetic: overlap must be at least d+1");

  SyntheticProblem problem;
  problem.sigma = sigma;

  Rng coord_rng(seed, 0x636f6f7264ull);
  Matrix truth(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) truth(i, j) = coord_rng.normal();
  }
  std::vector<NodeId> ids(n);
  for (Index i = 0; i < n; ++i) ids[i] = static_cast<NodeId>(i);
  problem.ground_truth = EmbeddingMatrix(truth, ids);

  // each node joins q consecutive patches around a ring, so adjacent
  // patches share about n(q-1)/p nodes
  Index q = p == 1 ? 1
                   : std::max<Index>(2, static_cast<Index>(std::ceil(
                                            static_cast<double>(p) * overlap / n + 1.0)));
  if (q > p) q = p;
  if (p > 1 && (q - 1) * (n / p) < overlap && q < p) {
    ++q;  // guard against floor effects in the expected overlap
  }
  if (p > 1 && (q - 1) * (n / p) < overlap) {
    fail_config("synthetic: overlap " + std::to_string(overlap) + " infeasible for " +
                std::to_string(n) + " nodes in " + std::to_string(p) + " patches");
  }

  std::vector<Index> start(n);
  {
    std::vector<Index> order(n);
    for (Index i = 0; i < n; ++i) order[i] = i;
    Rng perm_rng(seed, 0x7065726dull);
    perm_rng.shuffle(order);
    for (Index i = 0; i < n; ++i) start[order[i]] = i % p;
  }

  problem.patch_graph.patches.resize(p);
  for (Index v = 0; v < n; ++v) {
    for (Index o = 0; o < q; ++o) {
      problem.patch_graph.patches[(start[v] + o) % p].ids.push_back(static_cast<NodeId>(v));
    }
  }
  for (auto& patch : problem.patch_graph.patches) std::sort(patch.ids.begin(), patch.ids.end());

  // ring edges plus every chord whose window intersection is large enough
  for (Index i = 0; i < p; ++i) {
    for (Index j = i + 1; j < p; ++j) {
      const Index ring_dist = std::min(j - i, p - (j - i));
      if (p > 1 && ring_dist == 0) continue;
      std::vector<NodeId> inter;
      std::set_intersection(problem.patch_graph.patches[i].ids.begin(),
                            problem.patch_graph.patches[i].ids.end(),
                            problem.patch_graph.patches[j].ids.begin(),
                            problem.patch_graph.patches[j].ids.end(), std::back_inserter(inter));
      const bool ring_edge = ring_dist == 1;
      if ((ring_edge && static_cast<Index>(inter.size()) >= d + 1) ||
          (!ring_edge && static_cast<Index>(inter.size()) >= overlap)) {
        problem.patch_graph.edges.push_back({i, j, std::move(inter)});
      }
    }
  }

  problem.transforms.resize(p);
  problem.noise.resize(p);
  for (Index k = 0; k < p; ++k) {
    Rng rng(seed, Rng::mix(0x7472616e73ull, static_cast<std::uint64_t>(k)));
    auto& tf = problem.transforms[k];
    tf.scale = rng.uniform(0.5, 2.0);
    tf.rotation = detail::random_orthogonal(d, rng);
    tf.translation = RowVector(d);
    for (Index j = 0; j < d; ++j) tf.translation[j] = rng.uniform(-10.0, 10.0);

    auto& patch = problem.patch_graph.patches[k];
    Matrix base(patch.size(), d);
    for (Index r = 0; r < patch.size(); ++r) {
      base.row(r) = truth.row(static_cast<Index>(patch.ids[r]));
    }
    problem.noise[k] = Matrix::Zero(patch.size(), d);
    if (sigma > 0.0) {
      for (Index r = 0; r < patch.size(); ++r) {
        for (Index j = 0; j < d; ++j) problem.noise[k](r, j) = sigma * rng.normal();
      }
    }
    patch.coords = (tf.scale * base) * tf.rotation;
    patch.coords.rowwise() += tf.translation;
    patch.coords += problem.noise[k];
  }
  return problem;
}

/// Full-Procrustes distance between two embeddings over the same node set:
/// both are centred and normalized to unit Frobenius norm, then the optimal
/// scale and orthogonal transform are divided out, leaving
/// sqrt(1 - (sum of cross singular values)^2) in [0, 1]. Symmetric, zero on
/// similarity-equivalent pairs.
inline double procrustes_error(const EmbeddingMatrix& a, const EmbeddingMatrix& b) {
  if (a.dim() != b.dim()) fail_data("procrustes error: dimension mismatch");
  if (a.rows() != b.rows()) fail_data("procrustes error: node-count mismatch");

  Matrix bm(b.rows(), b.dim());
  for (Index r = 0; r < a.rows(); ++r) {
    const NodeId id = a.ids()[r];
    if (!b.contains(id)) fail_data("procrustes error: node " + std::to_string(id) + " missing");
    bm.row(r) = b.row(b.row_of(id));
  }

  Matrix ac = a.coords().rowwise() - a.coords().colwise().mean();
  Matrix bc = bm.rowwise() - bm.colwise().mean();
  const double na = ac.norm(), nb = bc.norm();
  if (na < 1e-300 || nb < 1e-300) return na == nb ? 0.0 : 1.0;
  ac /= na;
  bc /= nb;
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(bc.transpose() * ac,
                                        Eigen::ComputeFullU | Eigen::ComputeFullV);
  // optimal transform of the unit-normalized b onto a; the residual equals
  // sqrt(1 - trace^2) but evaluating it directly avoids the cancellation
  // that formula suffers near zero
  const double trace = svd.singularValues().sum();
  const Eigen::MatrixXd rot = svd.matrixU() * svd.matrixV().transpose();
  return (ac - trace * (bc * rot)).norm();
}

struct AucResult {
  double auc = 0.0;
  std::int64_t positives = 0;
  std::int64_t negatives = 0;
};

/// Edge-reconstruction AUC: every edge scored by the inner product of its
/// endpoint embeddings against sampled (or, with neg_samples = 0, all)
/// non-edges; rank-based AUC with midrank tie correction.
inline AucResult reconstruction_auc(const EmbeddingMatrix& emb, const SparseGraph& g,
                                    std::int64_t neg_samples, std::uint64_t seed) {
  if (g.mode() != GraphMode::undirected) fail_config("reconstruction AUC expects an undirected graph");
  const Index n = g.num_nodes();
  std::vector<Index> row(n);
  for (Index v = 0; v < n; ++v) row[v] = emb.row_of(g.node_id(v));

  const auto score = [&](Index u, Index v) {
    return emb.coords().row(row[u]).dot(emb.coords().row(row[v]));
  };

  std::vector<double> pos, neg;
  pos.reserve(g.num_edges());
  for (Index u = 0; u < n; ++u) {
    for (Index v : g.neighbors(u)) {
      if (v > u) pos.push_back(score(u, v));
    }
  }

  const std::int64_t non_edges = n * (n - 1) / 2 - g.num_edges();
  if (neg_samples == 0) {
    neg.reserve(non_edges);
    for (Index u = 0; u < n; ++u) {
      auto nb = g.neighbors(u);
      auto it = nb.begin();
      for (Index v = u + 1; v < n; ++v) {
        while (it != nb.end() && *it < v) ++it;
        if (it != nb.end() && *it == v) continue;
        neg.push_back(score(u, v));
      }
    }
  } else {
    if (neg_samples > non_edges) {
      fail_data("reconstruction AUC: requested " + std::to_string(neg_samples) +
                " negative samples but only " + std::to_string(non_edges) + " non-edges exist");
    }
    Rng rng(seed, 0x617563ull);
    std::unordered_set<std::uint64_t> taken;
    taken.reserve(static_cast<std::size_t>(neg_samples) * 2);
    while (static_cast<std::int64_t>(neg.size()) < neg_samples) {
      Index u = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
      Index v = static_cast<Index>(rng.below(static_cast<std::uint64_t>(n)));
      if (u == v) continue;
      if (u > v) std::swap(u, v);
      if (g.has_edge(u, v)) continue;
      const std::uint64_t key = static_cast<std::uint64_t>(u) * static_cast<std::uint64_t>(n) + v;
      if (!taken.insert(key).second) continue;
      neg.push_back(score(u, v));
    }
  }

  // midrank AUC over the pooled scores
  struct Tagged {
    double s;
    bool positive;
  };
  std::vector<Tagged> all;
  all.reserve(pos.size() + neg.size());
  for (double s : pos) all.push_back({s, true});
  for (double s : neg) all.push_back({s, false});
  std::sort(all.begin(), all.end(), [](const Tagged& a, const Tagged& b) { return a.s < b.s; });

  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].s == all[i].s) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (all[k].positive) rank_sum += midrank;
    }
    i = j;
  }
  const double np = static_cast<double>(pos.size());
  const double nn = static_cast<double>(neg.size());
  AucResult out;
  out.positives = static_cast<std::int64_t>(pos.size());
  out.negatives = static_cast<std::int64_t>(neg.size());
  out.auc = (rank_sum - np * (np + 1) / 2.0) / (np * nn);
  return out;
}

/// The no-trans baseline: per-node centroid of the raw patch coordinates,
/// with no alignment applied.
inline EmbeddingMatrix stitch_unaligned(const PatchGraph& pg) {
  std::vector<NodeId> ids;
  for (const auto& patch : pg.patches) ids.insert(ids.end(), patch.ids.begin(), patch.ids.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());

  const Index d = pg.dim();
  Matrix coords = Matrix::Zero(ids.size(), d);
  std::vector<double> count(ids.size(), 0.0);
  for (const auto& patch : pg.patches) {
    for (Index r = 0; r < patch.size(); ++r) {
      const Index row = static_cast<Index>(
          std::lower_bound(ids.begin(), ids.end(), patch.ids[r]) - ids.begin());
      coords.row(row) += patch.coords.row(r);
      count[row] += 1.0;
    }
  }
  for (std::size_t r = 0; r < ids.size(); ++r) coords.row(r) /= count[r];
  return EmbeddingMatrix(std::move(coords), std::move(ids));
}

}  // namespace l2g
