#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <filesystem>
#include <numeric>
#include <set>
#include <vector>

#include "l2g/expand.hpp"
#include "l2g/graph.hpp"
#include "l2g/partition.hpp"
#include "l2g/patch_graph.hpp"
#include "l2g/rng.hpp"
#include "l2g/sparsify.hpp"

using namespace l2g;

namespace {

Partition make_partition(const SparseGraph& g, const std::vector<Index>& assignment) {
  Partition part;
  part.p = *std::max_element(assignment.begin(), assignment.end()) + 1;
  part.assignment = assignment;
  part.rebuild_clusters();
  return part;
}

// patch graph with explicit edges; patch node sets are irrelevant for the
// resistance computations
PatchGraph bare_patch_graph(Index p, const std::vector<std::pair<Index, Index>>& edges) {
  PatchGraph pg;
  pg.patches.resize(p);
  for (Index k = 0; k < p; ++k) pg.patches[k].ids = {static_cast<NodeId>(k)};
  for (auto [i, j] : edges) pg.edges.push_back({i, j, {}});
  return pg;
}

// dense pseudoinverse oracle for effective resistance
double resistance_oracle(const PatchGraph& pg, const std::vector<double>& w, Index a, Index b) {
  const Index p = pg.num_patches();
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(p, p);
  for (std::size_t e = 0; e < pg.edges.size(); ++e) {
    const Index i = pg.edges[e].i, j = pg.edges[e].j;
    lap(i, i) += w[e];
    lap(j, j) += w[e];
    lap(i, j) -= w[e];
    lap(j, i) -= w[e];
  }
  const Eigen::MatrixXd pinv = lap.completeOrthogonalDecomposition().pseudoInverse();
  Eigen::VectorXd d = Eigen::VectorXd::Zero(p);
  d(a) = 1.0;
  d(b) = -1.0;
  return d.dot(pinv * d);
}

// ring of clusters: each cluster is a path plus chords, adjacent clusters
// joined by a handful of crossing edges
SparseGraph clustered_graph(Index p, Index size, std::uint64_t seed, int crossings = 3) {
  Rng rng(seed);
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (Index k = 0; k < p; ++k) {
    const NodeId base = static_cast<NodeId>(k * size);
    for (Index v = 0; v + 1 < size; ++v) edges.emplace_back(base + v, base + v + 1);
    for (Index c = 0; c < size; ++c) {
      const NodeId u = base + rng.below(size), v = base + rng.below(size);
      if (u != v) edges.emplace_back(u, v);
    }
    if (p > 1) {
      const NodeId next = static_cast<NodeId>(((k + 1) % p) * size);
      for (int c = 0; c < crossings; ++c) {
        edges.emplace_back(base + rng.below(size), next + rng.below(size));
      }
    }
  }
  return SparseGraph::undirected(edges);
}

Partition block_partition(const SparseGraph& g, Index p, Index size) {
  std::vector<Index> assignment(g.num_nodes());
  for (Index v = 0; v < g.num_nodes(); ++v) {
    assignment[v] = static_cast<Index>(g.node_id(v)) / size;
  }
  (void)p;
  return make_partition(g, assignment);
}

}  // namespace

TEST_SUITE_BEGIN("patch-graph");

TEST_CASE("build_patch_graph connects clusters that share an edge") {
  SUBCASE("one crossing edge gives one patch edge") {
    const SparseGraph g = SparseGraph::undirected({{0, 1}, {2, 3}, {1, 2}});
    const Partition part = make_partition(g, {0, 0, 1, 1});
    const PatchGraph pg = build_patch_graph(g, part);
    REQUIRE(pg.edges.size() == 1);
    CHECK(pg.edges[0].i == 0);
    CHECK(pg.edges[0].j == 1);
    CHECK(pg.edges[0].overlap.empty());
  }
  SUBCASE("connected graph gives a connected patch graph") {
    const SparseGraph g = clustered_graph(5, 8, 42);
    const Partition part = block_partition(g, 5, 8);
    const PatchGraph pg = build_patch_graph(g, part);
    CHECK(pg.connected());
    CHECK(pg.covers(g));
  }
  SUBCASE("no crossing edges gives no patch edges") {
    const SparseGraph g = SparseGraph::undirected({{0, 1}, {2, 3}});
    const Partition part = make_partition(g, {0, 0, 1, 1});
    const PatchGraph pg = build_patch_graph(g, part);
    CHECK(pg.edges.empty());
    CHECK_FALSE(pg.connected());
    CHECK_THROWS_AS(sparsify_patch_graph(pg, g, 4), Error);
  }
}

TEST_CASE("conductance weights on a worked example") {
  // P0 = {0,1,2,3}: internal edges (0,1),(1,2); P1 = {4,5,6,7}: a 4-cycle;
  // cut edges (3,4),(2,5) -> vol0 = 4, vol1 = 6, c = 2/min(4,6) = 0.5
  const SparseGraph g = SparseGraph::undirected(
      {{0, 1}, {1, 2}, {4, 5}, {5, 6}, {6, 7}, {7, 4}, {3, 4}, {2, 5}});
  const Partition part = make_partition(g, {0, 0, 0, 0, 1, 1, 1, 1});
  const PatchGraph pg = build_patch_graph(g, part);
  REQUIRE(pg.edges.size() == 1);
  const std::vector<double> c = conductance_weights(g, pg);
  CHECK(c[0] == doctest::Approx(0.5));
}

TEST_CASE("effective resistance hand cases") {
  SUBCASE("single unit edge") {
    const PatchGraph pg = bare_patch_graph(2, {{0, 1}});
    const std::vector<double> w{1.0};
    CHECK(effective_resistance(pg, w, 0) == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("triangle of unit edges") {
    const PatchGraph pg = bare_patch_graph(3, {{0, 1}, {1, 2}, {0, 2}});
    const std::vector<double> w{1.0, 1.0, 1.0};
    // series-parallel: 1 || (1+1) = 2/3
    CHECK(effective_resistance(pg, w, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
  }
  SUBCASE("two unit edges in series") {
    const PatchGraph pg = bare_patch_graph(3, {{0, 1}, {1, 2}});
    const std::vector<double> w{1.0, 1.0};
    CHECK(effective_resistance_between(pg, w, 0, 2) == doctest::Approx(2.0).epsilon(1e-9));
  }
  SUBCASE("disconnected patch graph is rejected") {
    const PatchGraph pg = bare_patch_graph(4, {{0, 1}, {2, 3}});
    const std::vector<double> w{1.0, 1.0};
    CHECK_THROWS_AS(effective_resistance(pg, w, 0), Error);
  }
}

TEST_CASE("effective resistance matches the dense pseudoinverse oracle") {
  for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
    Rng rng(seed);
    const Index p = 30;
    std::vector<std::pair<Index, Index>> edges;
    for (Index v = 1; v < p; ++v) {
      edges.emplace_back(static_cast<Index>(rng.below(v)), v);  // random tree
    }
    for (int extra = 0; extra < 40; ++extra) {
      const Index a = static_cast<Index>(rng.below(p)), b = static_cast<Index>(rng.below(p));
      if (a != b) edges.emplace_back(std::min(a, b), std::max(a, b));
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    const PatchGraph pg = bare_patch_graph(p, edges);
    std::vector<double> w(edges.size());
    for (auto& x : w) x = rng.uniform(0.1, 2.0);

    const std::vector<double> r = effective_resistances(pg, w);
    for (std::size_t e = 0; e < edges.size(); ++e) {
      const double oracle = resistance_oracle(pg, w, pg.edges[e].i, pg.edges[e].j);
      CHECK(std::abs(r[e] - oracle) < 1e-8);
    }
  }
}

TEST_CASE("sparsifier keeps the tree and hits the edge budget") {
  const Index p = 10, size = 6;
  // complete patch graph: pairwise crossing edges between all clusters
  std::vector<std::pair<NodeId, NodeId>> edges;
  Rng rng(7);
  for (Index k = 0; k < p; ++k) {
    const NodeId base = static_cast<NodeId>(k * size);
    for (Index v = 0; v + 1 < size; ++v) edges.emplace_back(base + v, base + v + 1);
  }
  for (Index a = 0; a < p; ++a) {
    for (Index b = a + 1; b < p; ++b) {
      edges.emplace_back(a * size + rng.below(size), b * size + rng.below(size));
    }
  }
  const SparseGraph g = SparseGraph::undirected(edges);
  const Partition part = block_partition(g, p, size);
  const PatchGraph pg = build_patch_graph(g, part);
  REQUIRE(pg.edges.size() == static_cast<std::size_t>(p * (p - 1) / 2));

  const PatchGraph sparse = sparsify_patch_graph(pg, g, 4, {.seed = 99});
  CHECK(sparse.edges.size() == 20);  // ceil(4 * 10 / 2)
  CHECK(sparse.connected());

  // oracle: maximum-weight spanning tree by Kruskal on the same weights
  const std::vector<double> c = conductance_weights(g, pg);
  const std::vector<double> r = effective_resistances(pg, c);
  std::vector<std::size_t> order(pg.edges.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> w(pg.edges.size());
  for (std::size_t e = 0; e < w.size(); ++e) w[e] = c[e] * r[e];
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (w[a] != w[b]) return w[a] > w[b];
    return std::pair{pg.edges[a].i, pg.edges[a].j} < std::pair{pg.edges[b].i, pg.edges[b].j};
  });
  std::vector<Index> parent(p);
  std::iota(parent.begin(), parent.end(), 0);
  const auto find = [&](Index x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  std::set<std::pair<Index, Index>> tree;
  for (std::size_t e : order) {
    const Index a = find(pg.edges[e].i), b = find(pg.edges[e].j);
    if (a != b) {
      parent[a] = b;
      tree.insert({pg.edges[e].i, pg.edges[e].j});
    }
  }
  std::set<std::pair<Index, Index>> kept;
  for (const auto& e : sparse.edges) kept.insert({e.i, e.j});
  for (const auto& t : tree) CHECK(kept.count(t) == 1);
}

TEST_CASE("sparsifier trivial cases") {
  SUBCASE("small edge set is kept whole") {
    const SparseGraph g = clustered_graph(4, 6, 3);
    const PatchGraph pg = build_patch_graph(g, block_partition(g, 4, 6));
    const PatchGraph sparse = sparsify_patch_graph(pg, g, 4);
    CHECK(sparse.edges.size() == pg.edges.size());  // |E_p| <= ceil(k*p/2)
  }
  SUBCASE("a tree stays a tree") {
    const SparseGraph g = SparseGraph::undirected({{0, 1}, {2, 3}, {4, 5}, {1, 2}, {3, 4}});
    const Partition part = make_partition(g, {0, 0, 1, 1, 2, 2});
    const PatchGraph pg = build_patch_graph(g, part);
    REQUIRE(pg.edges.size() == 2);
    const PatchGraph sparse = sparsify_patch_graph(pg, g, 2);
    CHECK(sparse.edges.size() == 2);
  }
  SUBCASE("target degree below 2 is rejected") {
    const SparseGraph g = clustered_graph(3, 5, 4);
    const PatchGraph pg = build_patch_graph(g, block_partition(g, 3, 5));
    CHECK_THROWS_AS(sparsify_patch_graph(pg, g, 1), Error);
  }
}

TEST_CASE("sparsifier is connected across seeds") {
  const SparseGraph g = clustered_graph(12, 5, 21, 4);
  const PatchGraph pg = build_patch_graph(g, block_partition(g, 12, 5));
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const PatchGraph sparse = sparsify_patch_graph(pg, g, 3, {.seed = seed});
    CHECK(sparse.connected());
    CHECK(sparse.edges.size() == std::min<std::size_t>(pg.edges.size(), 18));
  }
}

TEST_CASE("expansion reaches the overlap bounds") {
  // two 100-node clusters joined by one edge, l = 10, u = 40
  std::vector<std::pair<NodeId, NodeId>> edges;
  Rng rng(5);
  for (Index k = 0; k < 2; ++k) {
    const NodeId base = static_cast<NodeId>(k * 100);
    for (Index v = 0; v + 1 < 100; ++v) edges.emplace_back(base + v, base + v + 1);
    for (int c = 0; c < 60; ++c) {
      const NodeId u = base + rng.below(100), v = base + rng.below(100);
      if (u != v) edges.emplace_back(u, v);
    }
  }
  edges.emplace_back(99, 100);
  const SparseGraph g = SparseGraph::undirected(edges);
  const Partition part = block_partition(g, 2, 100);
  const PatchGraph pg = build_patch_graph(g, part);

  const PatchGraph grown = expand_patches(pg, g, 10, 40, 1);
  REQUIRE(grown.edges.size() == 1);
  CHECK(grown.edges[0].overlap.size() >= 10);
  // each side gained at least ceil(l/2) = 5 nodes from the other cluster
  Index side0 = 0, side1 = 0;
  for (NodeId id : grown.patches[0].ids) {
    if (id >= 100) ++side0;
  }
  for (NodeId id : grown.patches[1].ids) {
    if (id < 100) ++side1;
  }
  CHECK(side0 >= 5);
  CHECK(side1 >= 5);
  CHECK(side0 <= 20);  // u/2
  CHECK(side1 <= 20);
  CHECK(grown.covers(g));

  SUBCASE("expansion is idempotent once the guards hold") {
    const PatchGraph again = expand_patches(grown, g, 10, 40, 1);
    for (Index k = 0; k < 2; ++k) CHECK(again.patches[k].ids == grown.patches[k].ids);
  }
}

TEST_CASE("oversized frontier is subsampled to exactly u/2") {
  // cluster 0 = {0}; cluster 1 = a 30-node star around node 100, and node 0
  // is wired to every leaf, so the first frontier has 30 candidates
  std::vector<std::pair<NodeId, NodeId>> edges;
  for (Index v = 101; v <= 130; ++v) {
    edges.emplace_back(100, v);
    edges.emplace_back(0, v);
  }
  // make cluster 0 large enough to host the reverse expansion
  for (Index v = 1; v <= 10; ++v) edges.emplace_back(0, v);
  const SparseGraph g = SparseGraph::undirected(edges);
  std::vector<Index> assignment(g.num_nodes());
  for (Index v = 0; v < g.num_nodes(); ++v) assignment[v] = g.node_id(v) >= 100 ? 1 : 0;
  const PatchGraph pg = build_patch_graph(g, make_partition(g, assignment));

  const PatchGraph grown = expand_patches(pg, g, 10, 20, 3);
  Index inside = 0;  // |P_0 /\ C_1|
  for (NodeId id : grown.patches[0].ids) {
    if (id >= 100) ++inside;
  }
  CHECK(inside == 10);  // exactly u/2
}

TEST_CASE("expansion errors") {
  SUBCASE("neighbour cluster smaller than l/2") {
    const SparseGraph g = SparseGraph::undirected({{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}});
    const Partition part = make_partition(g, {0, 0, 0, 0, 1, 1});
    const PatchGraph pg = build_patch_graph(g, part);
    CHECK_THROWS_WITH_AS(expand_patches(pg, g, 8, 16, 0), doctest::Contains("cluster"), Error);
  }
  SUBCASE("u below 2l") {
    const SparseGraph g = SparseGraph::undirected({{0, 1}});
    const Partition part = make_partition(g, {0, 1});
    const PatchGraph pg = build_patch_graph(g, part);
    CHECK_THROWS_AS(expand_patches(pg, g, 4, 6, 0), Error);
  }
}

TEST_CASE("pipeline stages preserve the cover") {
  const SparseGraph g = clustered_graph(6, 20, 77, 5);
  const Partition part = fennel_partition(g, 6, {.min_cluster_size = 3});
  PatchGraph pg = build_patch_graph(g, part);
  CHECK(pg.covers(g));
  pg = sparsify_patch_graph(pg, g, 3, {.seed = 8});
  CHECK(pg.covers(g));
  pg = expand_patches(pg, g, 6, 12, 8);
  CHECK(pg.covers(g));
  for (const auto& e : pg.edges) CHECK(e.overlap.size() >= 6);
}

TEST_CASE("patch files round trip") {
  const SparseGraph g = clustered_graph(4, 7, 9);
  const Partition part = block_partition(g, 4, 7);
  PatchGraph pg = build_patch_graph(g, part);
  pg = expand_patches(pg, g, 4, 8, 2);

  const auto dir = std::filesystem::temp_directory_path();
  save_patches(pg, dir / "l2g_patches.txt");
  save_patch_edges(pg, dir / "l2g_patch_graph.txt");
  const PatchGraph back = load_patch_graph(dir / "l2g_patches.txt", dir / "l2g_patch_graph.txt");
  REQUIRE(back.num_patches() == pg.num_patches());
  REQUIRE(back.edges.size() == pg.edges.size());
  for (Index k = 0; k < pg.num_patches(); ++k) CHECK(back.patches[k].ids == pg.patches[k].ids);
  for (std::size_t e = 0; e < pg.edges.size(); ++e) {
    CHECK(back.edges[e].overlap == pg.edges[e].overlap);
  }
}

TEST_SUITE_END();
