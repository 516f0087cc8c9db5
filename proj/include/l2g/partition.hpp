#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "l2g/common.hpp"
#include "l2g/graph.hpp"

namespace l2g {

/// Disjoint cover of the node set by `p` clusters, indexed internally.
struct Partition {
  Index p = 0;
  std::vector<Index> assignment;           // node -> cluster
  std::vector<std::vector<Index>> clusters;  // cluster -> sorted node list

  void rebuild_clusters() {
    clusters.assign(p, {});
    for (Index v = 0; v < static_cast<Index>(assignment.size()); ++v) {
      clusters[assignment[v]].push_back(v);
    }
  }
};

struct FennelOptions {
  double gamma = 1.5;
  double alpha = 0.0;  // 0 = m * p^(gamma-1) / n^gamma
  double balance_slack = 1.1;
  int refine_passes = 1;
  Index min_cluster_size = 1;
};

namespace detail {

// score of placing v into cluster c: |N(v) /\ C| - alpha*gamma*|C|^(gamma-1)
// ties go to the lowest cluster index
inline Index fennel_best_cluster(const SparseGraph& g, Index v, const std::vector<Index>& assignment,
                                 const std::vector<Index>& cluster_size, Index p, Index cap,
                                 double alpha_gamma, double gamma, std::vector<double>& link_count,
                                 std::vector<Index>& touched) {
  touched.clear();
  for (Index u : g.neighbors(v)) {
    const Index c = assignment[u];
    if (c < 0) continue;
    if (link_count[c] == 0.0) touched.push_back(c);
    link_count[c] += 1.0;
  }

  Index best = -1;
  double best_score = 0.0;
  for (Index c = 0; c < p; ++c) {
    if (cluster_size[c] >= cap) continue;
    const double score =
        link_count[c] - alpha_gamma * std::pow(static_cast<double>(cluster_size[c]), gamma - 1.0);
    if (best < 0 || score > best_score) {
      best = c;
      best_score = score;
    }
  }
  for (Index c : touched) link_count[c] = 0.0;
  return best;
}

}  // namespace detail

/// Single-pass streaming partition (plus optional refinement passes) in
/// ascending node-id order. A hard cap of balance_slack*n/p bounds every
/// cluster; clusters below min_cluster_size are repaired afterwards by
/// stealing boundary nodes from the largest adjacent cluster.
inline Partition fennel_partition(const SparseGraph& g, Index p, const FennelOptions& opt = {}) {
  if (p <= 0) fail_config("fennel: cluster count must be positive");
  const Index n = g.num_nodes();
  if (p * opt.min_cluster_size > n) {
    fail_config("fennel: infeasible, " + std::to_string(p) + " clusters of size >= " +
                std::to_string(opt.min_cluster_size) + " need more than " + std::to_string(n) +
                " nodes");
  }

  const double m = static_cast<double>(g.num_edges());
  const double gamma = opt.gamma;
  const double alpha = opt.alpha > 0.0
                           ? opt.alpha
                           : m * std::pow(static_cast<double>(p), gamma - 1.0) /
                                 std::pow(static_cast<double>(n), gamma);
  const double alpha_gamma = alpha * gamma;
  const Index cap = std::max<Index>(
      {opt.min_cluster_size, static_cast<Index>(std::llround(opt.balance_slack * n / p)),
       (n + p - 1) / p});

  Partition part;
  part.p = p;
  part.assignment.assign(n, -1);
  std::vector<Index> cluster_size(p, 0);
  std::vector<double> link_count(p, 0.0);
  std::vector<Index> touched;

  for (Index v = 0; v < n; ++v) {
    const Index c = detail::fennel_best_cluster(g, v, part.assignment, cluster_size, p, cap,
                                                alpha_gamma, gamma, link_count, touched);
    part.assignment[v] = c;
    cluster_size[c]++;
  }

  for (int pass = 0; pass < opt.refine_passes; ++pass) {
    for (Index v = 0; v < n; ++v) {
      const Index old = part.assignment[v];
      part.assignment[v] = -1;
      cluster_size[old]--;
      const Index c = detail::fennel_best_cluster(g, v, part.assignment, cluster_size, p, cap,
                                                  alpha_gamma, gamma, link_count, touched);
      part.assignment[v] = c;
      cluster_size[c]++;
    }
  }

  // minimum-size repair: FENNEL itself gives no lower bound
  for (Index k = 0; k < p; ++k) {
    while (cluster_size[k] < opt.min_cluster_size) {
      // largest adjacent donor cluster, then its smallest-id boundary node
      std::vector<char> adjacent(p, 0);
      for (Index v = 0; v < n; ++v) {
        if (part.assignment[v] != k) continue;
        for (Index u : g.neighbors(v)) {
          if (part.assignment[u] != k) adjacent[part.assignment[u]] = 1;
        }
      }
      Index donor = -1;
      for (Index c = 0; c < p; ++c) {
        if (c == k || !adjacent[c] || cluster_size[c] <= opt.min_cluster_size) continue;
        if (donor < 0 || cluster_size[c] > cluster_size[donor]) donor = c;
      }
      bool need_boundary = donor >= 0;
      if (donor < 0) {
        // empty or non-adjacent cluster: fall back to the largest donor overall
        for (Index c = 0; c < p; ++c) {
          if (c == k || cluster_size[c] <= opt.min_cluster_size) continue;
          if (donor < 0 || cluster_size[c] > cluster_size[donor]) donor = c;
        }
      }
      if (donor < 0) fail_config("fennel: cannot repair cluster " + std::to_string(k));

      Index steal = -1;
      for (Index v = 0; v < n && steal < 0; ++v) {
        if (part.assignment[v] != donor) continue;
        if (!need_boundary) {
          steal = v;
          break;
        }
        for (Index u : g.neighbors(v)) {
          if (part.assignment[u] == k) {
            steal = v;
            break;
          }
        }
      }
      part.assignment[steal] = k;
      cluster_size[donor]--;
      cluster_size[k]++;
    }
  }

  part.rebuild_clusters();
  return part;
}

}  // namespace l2g
