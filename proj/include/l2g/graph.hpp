#pragma once

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <queue>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "l2g/common.hpp"

namespace l2g {

enum class GraphMode { undirected, bipartite };

// Immutable sparse graph. In undirected mode the adjacency is symmetric and
// rows/columns share one node-id space; in bipartite mode rows are sources,
// columns are destinations, and the two id spaces are independent (the same
// external id may appear on both sides as distinct entities).
class SparseGraph {
 public:
  SparseGraph() = default;

  /// Build an undirected graph from external-id edge pairs. Duplicate edges
  /// collapse to one, self-loops are dropped, internal indices follow
  /// ascending external id. `isolated` adds degree-zero nodes beyond the
  /// edge endpoints.
  static SparseGraph undirected(std::vector<std::pair<NodeId, NodeId>> edges,
                                std::vector<NodeId> isolated = {}) {
    SparseGraph g;
    g.mode_ = GraphMode::undirected;
    for (auto& [u, v] : edges) {
      if (u > v) std::swap(u, v);
    }
    std::erase_if(edges, [](const auto& e) { return e.first == e.second; });
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    g.row_ids_ = std::move(isolated);
    for (const auto& [u, v] : edges) {
      g.row_ids_.push_back(u);
      g.row_ids_.push_back(v);
    }
    std::sort(g.row_ids_.begin(), g.row_ids_.end());
    g.row_ids_.erase(std::unique(g.row_ids_.begin(), g.row_ids_.end()), g.row_ids_.end());
    g.build_row_index();

    std::vector<std::pair<Index, Index>> directed;
    directed.reserve(2 * edges.size());
    for (const auto& [u, v] : edges) {
      const Index iu = g.row_index_.at(u);
      const Index iv = g.row_index_.at(v);
      directed.emplace_back(iu, iv);
      directed.emplace_back(iv, iu);
    }
    g.build_csr(directed, static_cast<Index>(g.row_ids_.size()), g.offsets_, g.neighbors_);
    g.num_edges_ = static_cast<std::int64_t>(edges.size());
    return g;
  }

  /// Build a bipartite-directed graph from (source, destination) pairs.
  /// Duplicate directed pairs collapse to one.
  static SparseGraph bipartite(std::vector<std::pair<NodeId, NodeId>> edges) {
    SparseGraph g;
    g.mode_ = GraphMode::bipartite;
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());

    for (const auto& [u, v] : edges) {
      g.row_ids_.push_back(u);
      g.col_ids_.push_back(v);
    }
    std::sort(g.row_ids_.begin(), g.row_ids_.end());
    g.row_ids_.erase(std::unique(g.row_ids_.begin(), g.row_ids_.end()), g.row_ids_.end());
    std::sort(g.col_ids_.begin(), g.col_ids_.end());
    g.col_ids_.erase(std::unique(g.col_ids_.begin(), g.col_ids_.end()), g.col_ids_.end());
    g.build_row_index();
    for (Index i = 0; i < static_cast<Index>(g.col_ids_.size()); ++i) {
      g.col_index_[g.col_ids_[i]] = i;
    }

    std::vector<std::pair<Index, Index>> fwd, rev;
    fwd.reserve(edges.size());
    rev.reserve(edges.size());
    for (const auto& [u, v] : edges) {
      const Index iu = g.row_index_.at(u);
      const Index iv = g.col_index_.at(v);
      fwd.emplace_back(iu, iv);
      rev.emplace_back(iv, iu);
    }
    g.build_csr(fwd, static_cast<Index>(g.row_ids_.size()), g.offsets_, g.neighbors_);
    g.build_csr(rev, static_cast<Index>(g.col_ids_.size()), g.in_offsets_, g.in_neighbors_);
    g.num_edges_ = static_cast<std::int64_t>(edges.size());
    return g;
  }

  GraphMode mode() const { return mode_; }
  /// Node count (sources in bipartite mode).
  Index num_nodes() const { return static_cast<Index>(row_ids_.size()); }
  /// Destination count (== num_nodes() in undirected mode).
  Index num_cols() const {
    return mode_ == GraphMode::bipartite ? static_cast<Index>(col_ids_.size()) : num_nodes();
  }
  /// Undirected edge count, or directed edge count in bipartite mode.
  std::int64_t num_edges() const { return num_edges_; }

  std::span<const Index> neighbors(Index v) const {
    return {neighbors_.data() + offsets_[v], neighbors_.data() + offsets_[v + 1]};
  }
  std::span<const Index> in_neighbors(Index v) const {
    return {in_neighbors_.data() + in_offsets_[v], in_neighbors_.data() + in_offsets_[v + 1]};
  }
  Index degree(Index v) const { return offsets_[v + 1] - offsets_[v]; }
  Index in_degree(Index v) const { return in_offsets_[v + 1] - in_offsets_[v]; }

  NodeId node_id(Index v) const { return row_ids_[v]; }
  NodeId col_id(Index v) const {
    return mode_ == GraphMode::bipartite ? col_ids_[v] : row_ids_[v];
  }
  const std::vector<NodeId>& node_ids() const { return row_ids_; }
  const std::vector<NodeId>& col_ids() const {
    return mode_ == GraphMode::bipartite ? col_ids_ : row_ids_;
  }

  bool contains(NodeId id) const { return row_index_.count(id) > 0; }

  Index index_of(NodeId id) const {
    auto it = row_index_.find(id);
    if (it == row_index_.end()) fail_data("unknown node id " + std::to_string(id));
    return it->second;
  }

  bool has_edge(Index u, Index v) const {
    const auto nb = neighbors(u);
    return std::binary_search(nb.begin(), nb.end(), v);
  }

 private:
  void build_row_index() {
    row_index_.reserve(row_ids_.size());
    for (Index i = 0; i < static_cast<Index>(row_ids_.size()); ++i) {
      row_index_[row_ids_[i]] = i;
    }
  }

  static void build_csr(std::vector<std::pair<Index, Index>>& pairs, Index n,
                        std::vector<std::int64_t>& offsets, std::vector<Index>& neighbors) {
    std::sort(pairs.begin(), pairs.end());
    offsets.assign(n + 1, 0);
    neighbors.resize(pairs.size());
    for (const auto& [u, v] : pairs) offsets[u + 1]++;
    for (Index i = 0; i < n; ++i) offsets[i + 1] += offsets[i];
    for (std::size_t k = 0; k < pairs.size(); ++k) neighbors[k] = pairs[k].second;
  }

  GraphMode mode_ = GraphMode::undirected;
  std::int64_t num_edges_ = 0;
  std::vector<NodeId> row_ids_;
  std::vector<NodeId> col_ids_;  // bipartite only
  std::unordered_map<NodeId, Index> row_index_;
  std::unordered_map<NodeId, Index> col_index_;  // bipartite only
  std::vector<std::int64_t> offsets_;
  std::vector<Index> neighbors_;
  std::vector<std::int64_t> in_offsets_;  // bipartite only
  std::vector<Index> in_neighbors_;
};

namespace detail {

struct EdgeRecord {
  NodeId u;
  NodeId v;
  bool has_day;
  int day;
};

inline std::vector<EdgeRecord> parse_edge_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail_data("cannot open edge list: " + path.string());
  std::vector<EdgeRecord> records;
  std::string line;
  std::int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos || line[begin] == '#') continue;

    std::uint64_t fields[3];
    int nfields = 0;
    const char* p = line.data() + begin;
    const char* end = line.data() + line.size();
    while (p < end && nfields < 3) {
      while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
      if (p >= end) break;
      auto [next, ec] = std::from_chars(p, end, fields[nfields]);
      if (ec != std::errc{} || (next < end && *next != ' ' && *next != '\t' && *next != '\r')) {
        fail_data(path.string() + ":" + std::to_string(lineno) + ": malformed edge line");
      }
      ++nfields;
      p = next;
    }
    while (p < end && (*p == ' ' || *p == '\t' || *p == '\r')) ++p;
    if (nfields < 2 || p != end) {
      fail_data(path.string() + ":" + std::to_string(lineno) + ": malformed edge line");
    }
    records.push_back({fields[0], fields[1], nfields == 3, nfields == 3 ? static_cast<int>(fields[2]) : 0});
  }
  if (records.empty()) fail_data("empty edge list: " + path.string());
  return records;
}

}  // namespace detail

/// Load an edge list ("u v" or "u v day" per line, '#' comments). A day
/// column, if present, is ignored and the edges are aggregated.
inline SparseGraph load_edge_list(const std::filesystem::path& path, GraphMode mode) {
  const auto records = detail::parse_edge_lines(path);
  std::vector<std::pair<NodeId, NodeId>> edges;
  edges.reserve(records.size());
  for (const auto& r : records) edges.emplace_back(r.u, r.v);
  return mode == GraphMode::undirected ? SparseGraph::undirected(std::move(edges))
                                       : SparseGraph::bipartite(std::move(edges));
}

/// Load a temporal edge list grouped into one graph per day. Every line must
/// carry the day column.
inline std::map<int, SparseGraph> load_daily_graphs(const std::filesystem::path& path,
                                                    GraphMode mode) {
  const auto records = detail::parse_edge_lines(path);
  std::map<int, std::vector<std::pair<NodeId, NodeId>>> by_day;
  for (const auto& r : records) {
    if (!r.has_day) fail_data(path.string() + ": temporal load requires a day column on every line");
    by_day[r.day].emplace_back(r.u, r.v);
  }
  std::map<int, SparseGraph> out;
  for (auto& [day, edges] : by_day) {
    out.emplace(day, mode == GraphMode::undirected ? SparseGraph::undirected(std::move(edges))
                                                   : SparseGraph::bipartite(std::move(edges)));
  }
  return out;
}

/// Write a graph as a tab-separated edge list (undirected edges once each).
inline void save_edge_list(const SparseGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail_data("cannot write edge list: " + path.string());
  for (Index u = 0; u < g.num_nodes(); ++u) {
    for (Index v : g.neighbors(u)) {
      if (g.mode() == GraphMode::undirected && v < u) continue;
      out << g.node_id(u) << '\t' << g.col_id(v) << '\n';
    }
  }
}

/// Induced subgraph on the largest connected component. Ties between
/// equal-sized components go to the one containing the smallest external id.
inline SparseGraph largest_connected_component(const SparseGraph& g) {
  if (g.mode() != GraphMode::undirected) fail_config("largest_connected_component expects an undirected graph");
  const Index n = g.num_nodes();
  if (n == 0) return g;

  std::vector<Index> component(n, -1);
  Index num_components = 0;
  for (Index start = 0; start < n; ++start) {
    if (component[start] >= 0) continue;
    component[start] = num_components;
    std::queue<Index> queue;
    queue.push(start);
    while (!queue.empty()) {
      const Index u = queue.front();
      queue.pop();
      for (Index v : g.neighbors(u)) {
        if (component[v] < 0) {
          component[v] = num_components;
          queue.push(v);
        }
      }
    }
    ++num_components;
  }

  std::vector<Index> size(num_components, 0);
  for (Index v = 0; v < n; ++v) size[component[v]]++;
  // node 0 has the smallest external id, so scanning components by first
  // occurrence and keeping strict improvement implements the tie-break
  Index best = 0;
  for (Index c = 1; c < num_components; ++c) {
    if (size[c] > size[best]) best = c;
  }

  std::vector<std::pair<NodeId, NodeId>> edges;
  std::vector<NodeId> members;
  for (Index u = 0; u < n; ++u) {
    if (component[u] != best) continue;
    members.push_back(g.node_id(u));
    for (Index v : g.neighbors(u)) {
      if (v > u) edges.emplace_back(g.node_id(u), g.node_id(v));
    }
  }
  return SparseGraph::undirected(std::move(edges), std::move(members));
}

/// Induced subgraph on `nodes` (external ids); preserves external ids.
inline SparseGraph induced_subgraph(const SparseGraph& g, std::span<const NodeId> nodes) {
  if (g.mode() != GraphMode::undirected) fail_config("induced_subgraph expects an undirected graph");
  std::vector<Index> internal;
  internal.reserve(nodes.size());
  for (NodeId id : nodes) internal.push_back(g.index_of(id));
  std::sort(internal.begin(), internal.end());
  internal.erase(std::unique(internal.begin(), internal.end()), internal.end());

  std::vector<std::pair<NodeId, NodeId>> edges;
  std::vector<NodeId> members;
  members.reserve(internal.size());
  for (Index u : internal) {
    members.push_back(g.node_id(u));
    for (Index v : g.neighbors(u)) {
      if (v > u && std::binary_search(internal.begin(), internal.end(), v)) {
        edges.emplace_back(g.node_id(u), g.node_id(v));
      }
    }
  }
  return SparseGraph::undirected(std::move(edges), std::move(members));
}

}  // namespace l2g
