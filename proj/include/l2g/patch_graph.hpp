#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <queue>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "l2g/common.hpp"
#include "l2g/embedding.hpp"
#include "l2g/graph.hpp"
#include "l2g/partition.hpp"

namespace l2g {

/// A node subset with (optionally) its locally trained coordinates.
/// Ids are kept sorted ascending; coordinate rows follow the id order.
struct Patch {
  std::vector<NodeId> ids;
  Matrix coords;  // 0x0 until attached

  Index size() const { return static_cast<Index>(ids.size()); }
  bool has_coords() const { return coords.size() > 0; }
  bool contains(NodeId id) const { return std::binary_search(ids.begin(), ids.end(), id); }

  /// Row of `id` in ids/coords, or -1 when absent.
  Index local_index(NodeId id) const {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) return -1;
    return static_cast<Index>(it - ids.begin());
  }
};

struct PatchEdge {
  Index i;
  Index j;                      // i < j
  std::vector<NodeId> overlap;  // sorted ascending
  Index weight() const { return static_cast<Index>(overlap.size()); }
};

struct PatchGraph {
  std::vector<Patch> patches;
  std::vector<PatchEdge> edges;

  Index num_patches() const { return static_cast<Index>(patches.size()); }

  Index dim() const {
    for (const auto& p : patches) {
      if (p.has_coords()) return p.coords.cols();
    }
    return 0;
  }

  void recompute_overlaps() {
    for (auto& e : edges) {
      e.overlap.clear();
      std::set_intersection(patches[e.i].ids.begin(), patches[e.i].ids.end(),
                            patches[e.j].ids.begin(), patches[e.j].ids.end(),
                            std::back_inserter(e.overlap));
    }
  }

  bool connected() const {
    const Index p = num_patches();
    if (p == 0) return true;
    std::vector<std::vector<Index>> adj(p);
    for (const auto& e : edges) {
      adj[e.i].push_back(e.j);
      adj[e.j].push_back(e.i);
    }
    std::vector<char> seen(p, 0);
    std::queue<Index> queue;
    queue.push(0);
    seen[0] = 1;
    Index count = 1;
    while (!queue.empty()) {
      const Index u = queue.front();
      queue.pop();
      for (Index v : adj[u]) {
        if (!seen[v]) {
          seen[v] = 1;
          ++count;
          queue.push(v);
        }
      }
    }
    return count == p;
  }

  /// Every node of `g` must lie in at least one patch.
  bool covers(const SparseGraph& g) const {
    std::vector<char> hit(g.num_nodes(), 0);
    for (const auto& p : patches) {
      for (NodeId id : p.ids) {
        if (g.contains(id)) hit[g.index_of(id)] = 1;
      }
    }
    return std::all_of(hit.begin(), hit.end(), [](char c) { return c != 0; });
  }
};

/// Initialize patches to the clusters; two patches are connected iff some
/// edge of g crosses between their clusters. Overlaps start out empty.
inline PatchGraph build_patch_graph(const SparseGraph& g, const Partition& part) {
  PatchGraph pg;
  pg.patches.resize(part.p);
  for (Index k = 0; k < part.p; ++k) {
    auto& ids = pg.patches[k].ids;
    ids.reserve(part.clusters[k].size());
    for (Index v : part.clusters[k]) ids.push_back(g.node_id(v));
    std::sort(ids.begin(), ids.end());
  }

  std::vector<std::pair<Index, Index>> cross;
  for (Index u = 0; u < g.num_nodes(); ++u) {
    for (Index v : g.neighbors(u)) {
      if (v <= u) continue;
      Index a = part.assignment[u], b = part.assignment[v];
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      cross.emplace_back(a, b);
    }
  }
  std::sort(cross.begin(), cross.end());
  cross.erase(std::unique(cross.begin(), cross.end()), cross.end());
  for (const auto& [a, b] : cross) pg.edges.push_back({a, b, {}});
  return pg;
}

/// Conductance weight per patch edge (Alg. 1): cut(P_i, P_j) divided by the
/// smaller count of edges incident to either patch. Expects the disjoint
/// pre-expansion patches.
inline std::vector<double> conductance_weights(const SparseGraph& g, const PatchGraph& pg) {
  const Index p = pg.num_patches();
  std::vector<Index> patch_of(g.num_nodes(), -1);
  for (Index k = 0; k < p; ++k) {
    for (NodeId id : pg.patches[k].ids) patch_of[g.index_of(id)] = k;
  }

  std::map<std::pair<Index, Index>, std::size_t> edge_index;
  for (std::size_t e = 0; e < pg.edges.size(); ++e) {
    edge_index[{pg.edges[e].i, pg.edges[e].j}] = e;
  }

  std::vector<double> volume(p, 0.0);
  std::vector<double> cut(pg.edges.size(), 0.0);
  for (Index u = 0; u < g.num_nodes(); ++u) {
    for (Index v : g.neighbors(u)) {
      if (v < u) continue;  // each edge of g once
      Index a = patch_of[u], b = patch_of[v];
      if (a >= 0) volume[a] += 1.0;
      if (b >= 0 && b != a) volume[b] += 1.0;
      if (a < 0 || b < 0 || a == b) continue;
      if (a > b) std::swap(a, b);
      auto it = edge_index.find({a, b});
      if (it != edge_index.end()) cut[it->second] += 1.0;
    }
  }

  std::vector<double> weights(pg.edges.size());
  for (std::size_t e = 0; e < pg.edges.size(); ++e) {
    const double lo = std::min(volume[pg.edges[e].i], volume[pg.edges[e].j]);
    weights[e] = lo > 0.0 ? cut[e] / lo : 0.0;
  }
  return weights;
}

/// Text patch file: line k reads "k: id1 id2 id3 ..." with ids ascending.
inline void save_patches(const PatchGraph& pg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail_data("cannot write patch file: " + path.string());
  for (Index k = 0; k < pg.num_patches(); ++k) {
    out << k << ':';
    for (NodeId id : pg.patches[k].ids) out << ' ' << id;
    out << '\n';
  }
}

/// Patch-graph file: one "i j overlap_size" line per edge.
inline void save_patch_edges(const PatchGraph& pg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail_data("cannot write patch-graph file: " + path.string());
  for (const auto& e : pg.edges) {
    out << e.i << ' ' << e.j << ' ' << e.overlap.size() << '\n';
  }
}

/// Load the pair of files written by save_patches / save_patch_edges;
/// overlaps are recomputed from the patch node sets and validated against
/// the stored sizes.
inline PatchGraph load_patch_graph(const std::filesystem::path& patches_path,
                                   const std::filesystem::path& edges_path) {
  PatchGraph pg;
  {
    std::ifstream in(patches_path);
    if (!in) fail_data("cannot open patch file: " + patches_path.string());
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty()) continue;
      std::istringstream row(line);
      std::string label;
      row >> label;
      if (label.empty() || label.back() != ':') {
        fail_data(patches_path.string() + ":" + std::to_string(lineno) + ": expected 'k:' prefix");
      }
      Patch patch;
      NodeId id;
      while (row >> id) patch.ids.push_back(id);
      if (!std::is_sorted(patch.ids.begin(), patch.ids.end())) {
        std::sort(patch.ids.begin(), patch.ids.end());
      }
      pg.patches.push_back(std::move(patch));
    }
    if (pg.patches.empty()) fail_data("empty patch file: " + patches_path.string());
  }
  {
    std::ifstream in(edges_path);
    if (!in) fail_data("cannot open patch-graph file: " + edges_path.string());
    Index i, j;
    std::size_t size;
    while (in >> i >> j >> size) {
      if (i < 0 || j < 0 || i >= pg.num_patches() || j >= pg.num_patches()) {
        fail_data(edges_path.string() + ": patch index out of range");
      }
      if (i > j) std::swap(i, j);
      pg.edges.push_back({i, j, {}});
    }
  }
  pg.recompute_overlaps();
  return pg;
}

}  // namespace l2g
