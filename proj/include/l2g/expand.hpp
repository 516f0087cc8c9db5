#pragma once

#include <algorithm>
#include <string>
#include <unordered_set>
#include <vector>

#include "l2g/common.hpp"
#include "l2g/patch_graph.hpp"
#include "l2g/rng.hpp"

namespace l2g {

/// Grow each patch into its neighbouring clusters by breadth-first frontiers
/// (the overlap-creation loop) until every directed pair (i, j) holds at
/// least ceil(l/2) nodes of cluster j inside patch i, capping the per-side
/// addition at floor(u/2). The patches as handed in play the role of the
/// clusters; running the expansion on an already-expanded patch graph is a
/// no-op because every guard is already satisfied. Frontier subsampling
/// keys on (seed, i, j); overlaps are recomputed at the end, after which
/// every patch edge carries at least l shared nodes.
inline PatchGraph expand_patches(const PatchGraph& pg, const SparseGraph& g, Index min_overlap,
                                 Index max_overlap, std::uint64_t seed) {
  if (max_overlap < 2 * min_overlap) {
    fail_config("expand: max overlap must be at least twice the min overlap");
  }
  const Index half_l = (min_overlap + 1) / 2;
  const Index half_u = max_overlap / 2;
  const Index p = pg.num_patches();

  std::vector<std::vector<Index>> cluster(p);  // internal node indices, sorted
  for (Index k = 0; k < p; ++k) {
    for (NodeId id : pg.patches[k].ids) cluster[k].push_back(g.index_of(id));
    std::sort(cluster[k].begin(), cluster[k].end());
  }
  const auto in_cluster = [&](Index k, Index v) {
    return std::binary_search(cluster[k].begin(), cluster[k].end(), v);
  };

  std::vector<std::unordered_set<Index>> in_patch(p);
  for (Index k = 0; k < p; ++k) in_patch[k].insert(cluster[k].begin(), cluster[k].end());
  std::vector<std::vector<Index>> gained(p);

  for (Index i = 0; i < p; ++i) {
    std::vector<Index> neighbours;
    for (const auto& e : pg.edges) {
      if (e.i == i) neighbours.push_back(e.j);
      if (e.j == i) neighbours.push_back(e.i);
    }
    std::sort(neighbours.begin(), neighbours.end());
    neighbours.erase(std::unique(neighbours.begin(), neighbours.end()), neighbours.end());

    for (Index j : neighbours) {
      if (static_cast<Index>(cluster[j].size()) < half_l) {
        fail_data("expand: cluster " + std::to_string(j) + " has " +
                  std::to_string(cluster[j].size()) + " nodes, fewer than the " +
                  std::to_string(half_l) + " required for patch pair (" + std::to_string(i) +
                  ", " + std::to_string(j) + ")");
      }

      Index inside = 0;  // |P_i /\ C_j|
      for (Index v : cluster[j]) {
        if (in_patch[i].count(v)) ++inside;
      }
      if (inside >= half_l) continue;

      Rng rng(seed, Rng::mix(0x657870ull + static_cast<std::uint64_t>(i),
                             static_cast<std::uint64_t>(j)));

      // F = N(C_i) /\ C_j, minus what the patch already holds
      std::vector<Index> frontier;
      {
        std::unordered_set<Index> seen;
        for (Index v : cluster[i]) {
          for (Index w : g.neighbors(v)) {
            if (in_cluster(j, w) && !in_patch[i].count(w) && seen.insert(w).second) {
              frontier.push_back(w);
            }
          }
        }
        std::sort(frontier.begin(), frontier.end());
      }

      while (inside < half_l) {
        if (frontier.empty()) {
          fail_data("expand: frontier exhausted before reaching overlap " +
                    std::to_string(half_l) + " for patch pair (" + std::to_string(i) + ", " +
                    std::to_string(j) + ")");
        }
        if (static_cast<Index>(frontier.size()) + inside > half_u) {
          // subsample so the side lands exactly on u/2
          const Index want = half_u - inside;
          rng.shuffle(frontier);
          frontier.resize(want);
          std::sort(frontier.begin(), frontier.end());
        }
        for (Index v : frontier) {
          in_patch[i].insert(v);
          gained[i].push_back(v);
        }
        inside += static_cast<Index>(frontier.size());

        std::vector<Index> next;
        std::unordered_set<Index> seen;
        for (Index v : frontier) {
          for (Index w : g.neighbors(v)) {
            if (in_cluster(j, w) && !in_patch[i].count(w) && seen.insert(w).second) {
              next.push_back(w);
            }
          }
        }
        std::sort(next.begin(), next.end());
        frontier = std::move(next);
      }
    }
  }

  PatchGraph out;
  out.patches.resize(p);
  out.edges = pg.edges;
  for (Index k = 0; k < p; ++k) {
    auto& ids = out.patches[k].ids;
    ids = pg.patches[k].ids;
    for (Index v : gained[k]) ids.push_back(g.node_id(v));
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  }
  out.recompute_overlaps();
  return out;
}

}  // namespace l2g
