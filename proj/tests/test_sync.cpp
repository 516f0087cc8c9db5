#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "l2g/eval.hpp"
#include "l2g/procrustes.hpp"
#include "l2g/rng.hpp"
#include "l2g/sync.hpp"

using namespace l2g;

namespace {

Matrix random_points(Index rows, Index cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index j = 0; j < cols; ++j) m(i, j) = rng.normal();
  }
  return m;
}

Matrix rotation2d(double angle) {
  Matrix r(2, 2);
  r << std::cos(angle), -std::sin(angle), std::sin(angle), std::cos(angle);
  return r;
}

PatchGraph bare_graph(Index p, const std::vector<std::pair<Index, Index>>& edges) {
  PatchGraph pg;
  pg.patches.resize(p);
  for (Index k = 0; k < p; ++k) pg.patches[k].ids = {static_cast<NodeId>(k)};
  for (auto [i, j] : edges) pg.edges.push_back({i, j, {}});
  return pg;
}

// random connected patch graph (tree plus extra edges) with unit weights
std::vector<std::pair<Index, Index>> random_connected_edges(Index p, std::uint64_t seed,
                                                            int extra = 0) {
  Rng rng(seed);
  std::vector<std::pair<Index, Index>> edges;
  for (Index v = 1; v < p; ++v) edges.emplace_back(static_cast<Index>(rng.below(v)), v);
  for (int e = 0; e < extra; ++e) {
    const Index a = static_cast<Index>(rng.below(p)), b = static_cast<Index>(rng.below(p));
    if (a != b) edges.emplace_back(std::min(a, b), std::max(a, b));
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  return edges;
}

RelativeTransforms unit_weight_transforms(const PatchGraph& pg, Index d) {
  RelativeTransforms t;
  t.scales.assign(pg.edges.size(), 1.0);
  t.rotations.assign(pg.edges.size(), Matrix::Identity(d, d));
  t.weights.assign(pg.edges.size(), 1.0);
  return t;
}

}  // namespace

TEST_SUITE_BEGIN("sync");

TEST_CASE("relative scale estimates") {
  const Matrix xi = random_points(6, 2, 1);
  SUBCASE("identical blocks give 1") {
    CHECK(estimate_relative_scale(xi, xi) == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("halved coordinates give 2") {
    const Matrix xj = 0.5 * xi;
    CHECK(estimate_relative_scale(xi, xj) == doctest::Approx(2.0).epsilon(1e-12));
  }
  SUBCASE("rotation and shift do not disturb the ratio") {
    const Matrix q = rotation2d(30.0 * 3.14159265358979323846 / 180.0);
    Matrix xj = 0.25 * (xi * q);
    xj.rowwise() += RowVector::Constant(2, 3.7);
    CHECK(estimate_relative_scale(xi, xj) == doctest::Approx(4.0).epsilon(1e-12));
  }
  SUBCASE("reciprocal symmetry") {
    const Matrix xj = random_points(6, 2, 2);
    const double fwd = estimate_relative_scale(xi, xj);
    const double bwd = estimate_relative_scale(xj, xi);
    CHECK(std::abs(fwd * bwd - 1.0) < 1e-9);
  }
  SUBCASE("degenerate overlap is rejected") {
    const Matrix xj = Matrix::Zero(6, 2);
    CHECK_THROWS_AS(estimate_relative_scale(xi, xj), Error);
  }
}

TEST_CASE("relative rotation estimates") {
  const Matrix xi = random_points(8, 2, 3);
  SUBCASE("identical blocks give the identity") {
    const Matrix r = estimate_relative_rotation(xi, xi);
    CHECK((r - Matrix::Identity(2, 2)).norm() < 1e-12);
  }
  SUBCASE("a known rotation is recovered") {
    const Matrix q = rotation2d(90.0 * 3.14159265358979323846 / 180.0);
    const Matrix xj = xi * q;
    const Matrix r = estimate_relative_rotation(xi, xj);
    // xj r^T = xi with xj = xi q forces r = q
    CHECK((xj * r.transpose() - xi).norm() < 1e-12);
    CHECK((r - q).norm() < 1e-12);
  }
  SUBCASE("reflections are admissible") {
    Matrix mirror = Matrix::Identity(2, 2);
    mirror(0, 0) = -1.0;
    const Matrix xj = xi * mirror;
    const Matrix r = estimate_relative_rotation(xi, xj);
    CHECK(r.determinant() == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK((r.transpose() * r - Matrix::Identity(2, 2)).norm() < 1e-12);
  }
  SUBCASE("transpose symmetry") {
    const Matrix xj = random_points(8, 2, 4);
    const Matrix fwd = estimate_relative_rotation(xi, xj);
    const Matrix bwd = estimate_relative_rotation(xj, xi);
    CHECK((fwd - bwd.transpose()).norm() < 1e-9);
  }
  SUBCASE("too few rows are rejected") {
    const Matrix small = random_points(2, 2, 5);
    CHECK_THROWS_AS(estimate_relative_rotation(small, small), Error);
  }
}

TEST_CASE("scale synchronization") {
  SUBCASE("consistent unit ratios give unit scales") {
    const PatchGraph pg = bare_graph(4, random_connected_edges(4, 6, 2));
    const RelativeTransforms t = unit_weight_transforms(pg, 2);
    const Vector s = synchronize_scales(pg, t);
    CHECK((s - Vector::Ones(4)).lpNorm<Eigen::Infinity>() < 1e-9);
  }
  SUBCASE("two patches with ratio 2 land on (4/3, 2/3)") {
    const PatchGraph pg = bare_graph(2, {{0, 1}});
    RelativeTransforms t = unit_weight_transforms(pg, 2);
    t.scales[0] = 2.0;
    const Vector s = synchronize_scales(pg, t);
    CHECK(s[0] == doctest::Approx(4.0 / 3.0).epsilon(1e-9));
    CHECK(s[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
  }
  SUBCASE("a consistent chain is recovered exactly") {
    const PatchGraph pg = bare_graph(3, {{0, 1}, {1, 2}});
    RelativeTransforms t = unit_weight_transforms(pg, 2);
    const double truth[3] = {2.0, 1.0, 0.5};
    t.scales[0] = truth[0] / truth[1];
    t.scales[1] = truth[1] / truth[2];
    const Vector s = synchronize_scales(pg, t);
    const double mean = (truth[0] + truth[1] + truth[2]) / 3.0;
    for (Index i = 0; i < 3; ++i) CHECK(s[i] == doctest::Approx(truth[i] / mean).epsilon(1e-8));
    CHECK(s.mean() == doctest::Approx(1.0).epsilon(1e-12));
  }
  SUBCASE("disconnected graphs are rejected") {
    const PatchGraph pg = bare_graph(4, {{0, 1}, {2, 3}});
    const RelativeTransforms t = unit_weight_transforms(pg, 2);
    CHECK_THROWS_AS(synchronize_scales(pg, t), Error);
  }
}

TEST_CASE("rotation synchronization") {
  SUBCASE("consistent identities give a constant gauge") {
    const PatchGraph pg = bare_graph(5, random_connected_edges(5, 7, 3));
    const RelativeTransforms t = unit_weight_transforms(pg, 3);
    const auto s = synchronize_rotations(pg, t, nullptr, {.seed = 1});
    for (Index i = 0; i < 5; ++i) {
      CHECK((s[i] - s[0]).norm() < 1e-8);  // identity after gauging to patch 0
      CHECK((s[i].transpose() * s[i] - Matrix::Identity(3, 3)).norm() < 1e-10);
    }
  }
  SUBCASE("exact relative rotations are recovered modulo gauge") {
    for (Index d : {2, 4}) {
      const Index p = 10;
      const PatchGraph pg = bare_graph(p, random_connected_edges(p, 8 + d, 6));
      std::vector<Matrix> truth(p);
      Rng rng(17 + static_cast<std::uint64_t>(d));
      for (auto& m : truth) m = l2g::detail::random_orthogonal(d, rng);

      RelativeTransforms t;
      for (const auto& e : pg.edges) {
        t.scales.push_back(1.0);
        t.rotations.push_back(truth[e.i] * truth[e.j].transpose());
        t.weights.push_back(1.0 + static_cast<double>(rng.below(5)));
      }
      const auto s = synchronize_rotations(pg, t, nullptr, {.seed = 2});

      // gauge consistency: truth_i^T * estimate_i must not depend on i
      const Matrix gauge = truth[0].transpose() * s[0];
      for (Index i = 0; i < p; ++i) {
        CHECK((truth[i].transpose() * s[i] - gauge).norm() < 1e-7);
        CHECK((s[i].transpose() * s[i] - Matrix::Identity(d, d)).norm() < 1e-8);
      }
      for (std::size_t e = 0; e < pg.edges.size(); ++e) {
        CHECK((s[pg.edges[e].i] * s[pg.edges[e].j].transpose() - t.rotations[e]).norm() < 1e-7);
      }
    }
  }
  SUBCASE("noisy inputs still give orthogonal outputs") {
    const Index p = 8, d = 3;
    const PatchGraph pg = bare_graph(p, random_connected_edges(p, 29, 6));
    std::vector<Matrix> truth(p);
    Rng rng(31);
    for (auto& m : truth) m = l2g::detail::random_orthogonal(d, rng);
    RelativeTransforms t;
    for (const auto& e : pg.edges) {
      Matrix noisy = truth[e.i] * truth[e.j].transpose();
      for (Index r = 0; r < d; ++r) {
        for (Index c = 0; c < d; ++c) noisy(r, c) += 0.01 * rng.normal();
      }
      t.scales.push_back(1.0);
      t.rotations.push_back(nearest_orthogonal(noisy));
      t.weights.push_back(1.0);
    }
    const auto s = synchronize_rotations(pg, t, nullptr, {.seed = 3});
    for (Index i = 0; i < p; ++i) {
      CHECK((s[i].transpose() * s[i] - Matrix::Identity(d, d)).norm() < 1e-8);
    }
  }
}

TEST_CASE("translation synchronization") {
  const Index d = 2;
  SUBCASE("two shifted patches split the difference") {
    PatchGraph pg;
    pg.patches.resize(2);
    pg.patches[0].ids = {0, 1, 2, 3};
    pg.patches[1].ids = {0, 1, 2, 3};
    pg.patches[0].coords = random_points(4, d, 41);
    pg.patches[1].coords = pg.patches[0].coords;
    pg.patches[1].coords.col(0).array() -= 1.0;  // patch 2 = patch 1 - (1, 0)
    pg.edges.push_back({0, 1, {0, 1, 2, 3}});

    const std::vector<Matrix> rotated{pg.patches[0].coords, pg.patches[1].coords};
    const Matrix t = synchronize_translations(pg, rotated);
    CHECK(t(0, 0) == doctest::Approx(-0.5).epsilon(1e-10));
    CHECK(t(1, 0) == doctest::Approx(0.5).epsilon(1e-10));
    CHECK(std::abs(t(0, 1)) < 1e-10);
    CHECK(std::abs(t(1, 1)) < 1e-10);
  }
  SUBCASE("consistent patches need no translation") {
    PatchGraph pg;
    pg.patches.resize(2);
    pg.patches[0].ids = {0, 1, 2};
    pg.patches[1].ids = {0, 1, 2};
    pg.patches[0].coords = random_points(3, d, 43);
    pg.patches[1].coords = pg.patches[0].coords;
    pg.edges.push_back({0, 1, {0, 1, 2}});
    const Matrix t = synchronize_translations(pg, {pg.patches[0].coords, pg.patches[1].coords});
    CHECK(t.lpNorm<Eigen::Infinity>() < 1e-12);
  }
  SUBCASE("a consistent cycle is solved exactly") {
    // three patches over the same nodes, shifted by ground-truth rows
    Matrix truth(3, d);
    truth << 1.0, -2.0, 0.5, 1.5, -1.5, 0.5;
    truth.rowwise() -= truth.colwise().mean().eval();  // zero-mean gauge

    PatchGraph pg;
    pg.patches.resize(3);
    const Matrix base = random_points(5, d, 47);
    std::vector<Matrix> rotated(3);
    for (Index k = 0; k < 3; ++k) {
      pg.patches[k].ids = {0, 1, 2, 3, 4};
      rotated[k] = base;
      rotated[k].rowwise() -= truth.row(k);  // solving recovers +truth
      pg.patches[k].coords = rotated[k];
    }
    pg.edges.push_back({0, 1, {0, 1, 2, 3, 4}});
    pg.edges.push_back({1, 2, {0, 1, 2, 3, 4}});
    pg.edges.push_back({0, 2, {0, 1, 2, 3, 4}});

    const Matrix t = synchronize_translations(pg, rotated);
    CHECK((t - truth).lpNorm<Eigen::Infinity>() < 1e-10);
    CHECK(t.colwise().mean().lpNorm<Eigen::Infinity>() < 1e-10);
  }
}

TEST_CASE("stitching averages aligned positions") {
  PatchGraph pg;
  pg.patches.resize(2);
  pg.patches[0].ids = {0, 1};
  pg.patches[1].ids = {1, 2};
  Matrix a(2, 2), b(2, 2);
  a << 0.0, 0.0, 0.0, 0.0;
  b << 1.0, 1.0, 5.0, 5.0;
  pg.patches[0].coords = a;
  pg.patches[1].coords = b;
  pg.edges.push_back({0, 1, {1}});

  const EmbeddingMatrix emb = stitch_centroid(pg, {a, b}, Matrix::Zero(2, 2));
  CHECK(emb.rows() == 3);
  CHECK(emb.row(emb.row_of(0))(0) == doctest::Approx(0.0));    // only in patch 0
  CHECK(emb.row(emb.row_of(1))(0) == doctest::Approx(0.5));    // mean of 0 and 1
  CHECK(emb.row(emb.row_of(2))(0) == doctest::Approx(5.0));    // only in patch 1
}

TEST_CASE("full alignment") {
  SUBCASE("single patch passes through") {
    SyntheticProblem problem = generate_synthetic(40, 3, 1, 4, 0.0, 5);
    const AlignmentResult res = align_patches(problem.patch_graph, {.scale_sync = true});
    CHECK((res.stitched.coords() - problem.patch_graph.patches[0].coords).norm() < 1e-12);
  }
  SUBCASE("noise-free synthetic problems are recovered exactly") {
    for (std::uint64_t seed : {1ull, 2ull}) {
      const SyntheticProblem problem = generate_synthetic(300, 4, 8, 12, 0.0, seed);
      const AlignmentResult res = align_patches(problem.patch_graph, {.scale_sync = true});
      CHECK(procrustes_error(res.stitched, problem.ground_truth) < 1e-5);
      CHECK(res.scales.mean() == doctest::Approx(1.0).epsilon(1e-9));
      for (const auto& r : res.rotations) {
        CHECK((r.transpose() * r - Matrix::Identity(4, 4)).norm() < 1e-8);
      }
      CHECK(res.translations.colwise().mean().lpNorm<Eigen::Infinity>() < 1e-9);
      CHECK(res.stitched.coords().allFinite());
    }
  }
  SUBCASE("scale sync changes nothing when the true scales are 1") {
    SyntheticProblem problem = generate_synthetic(200, 3, 6, 10, 0.0, 9);
    for (Index k = 0; k < problem.patch_graph.num_patches(); ++k) {
      auto& patch = problem.patch_graph.patches[k];
      Matrix base(patch.size(), 3);
      for (Index r = 0; r < patch.size(); ++r) {
        base.row(r) = problem.ground_truth.row(
            problem.ground_truth.row_of(patch.ids[r]));
      }
      patch.coords = base * problem.transforms[k].rotation;
      patch.coords.rowwise() += problem.transforms[k].translation;
    }
    const AlignmentResult with = align_patches(problem.patch_graph, {.scale_sync = true});
    const AlignmentResult without = align_patches(problem.patch_graph, {.scale_sync = false});
    CHECK((with.stitched.coords() - without.stitched.coords()).lpNorm<Eigen::Infinity>() < 1e-7);
  }
  SUBCASE("patch without coordinates is rejected") {
    SyntheticProblem problem = generate_synthetic(60, 2, 3, 6, 0.0, 3);
    problem.patch_graph.patches[1].coords = Matrix();
    CHECK_THROWS_AS(align_patches(problem.patch_graph, {}), Error);
  }
}

TEST_CASE("alignment invariance properties") {
  SUBCASE("equivariance under a global similarity transform") {
    const SyntheticProblem problem = generate_synthetic(250, 3, 6, 10, 0.01, 13);
    const AlignmentResult base = align_patches(problem.patch_graph, {.scale_sync = true});

    Rng rng(14);
    const Matrix q = l2g::detail::random_orthogonal(3, rng);
    RowVector shift(3);
    for (Index j = 0; j < 3; ++j) shift[j] = rng.uniform(-5.0, 5.0);

    PatchGraph moved = problem.patch_graph;
    for (auto& patch : moved.patches) {
      patch.coords = (patch.coords * q).eval();
      patch.coords.rowwise() += shift;
    }
    const AlignmentResult transformed = align_patches(moved, {.scale_sync = true});

    Matrix expected = base.stitched.coords() * q;
    expected.rowwise() += shift;
    const EmbeddingMatrix expected_emb(expected, base.stitched.ids());
    CHECK(procrustes_error(transformed.stitched, expected_emb) < 1e-7);
  }
  SUBCASE("error grows with noise and alignment beats no-trans") {
    const double sigmas[4] = {0.0, 0.01, 0.05, 0.1};
    double mean_error[4] = {0.0, 0.0, 0.0, 0.0};
    const int num_seeds = 10;
    for (int s = 0; s < num_seeds; ++s) {
      for (int i = 0; i < 4; ++i) {
        const SyntheticProblem problem =
            generate_synthetic(200, 3, 6, 10, sigmas[i], 100 + static_cast<std::uint64_t>(s));
        const AlignmentResult res = align_patches(problem.patch_graph, {.scale_sync = true});
        const double err = procrustes_error(res.stitched, problem.ground_truth);
        mean_error[i] += err / num_seeds;
        if (sigmas[i] <= 0.05) {
          const double no_trans =
              procrustes_error(stitch_unaligned(problem.patch_graph), problem.ground_truth);
          CHECK(err < no_trans);
        }
      }
    }
    CHECK(mean_error[0] <= mean_error[1]);
    CHECK(mean_error[1] <= mean_error[2]);
    CHECK(mean_error[2] <= mean_error[3]);
  }
}

TEST_CASE("hierarchical alignment") {
  SUBCASE("one cluster reproduces the flat result") {
    const SyntheticProblem problem = generate_synthetic(300, 4, 8, 12, 0.0, 21);
    const AlignmentResult flat = align_patches(problem.patch_graph, {.scale_sync = true});
    const AlignmentResult hier = hierarchical_align(problem.patch_graph, 1, {.scale_sync = true});
    CHECK((flat.stitched.coords() - hier.stitched.coords()).lpNorm<Eigen::Infinity>() < 1e-9);
  }
  SUBCASE("three clusters still recover a noise-free problem") {
    const SyntheticProblem problem = generate_synthetic(400, 4, 10, 12, 0.0, 22);
    const AlignmentResult hier = hierarchical_align(problem.patch_graph, 3, {.scale_sync = true});
    CHECK(procrustes_error(hier.stitched, problem.ground_truth) < 1e-4);
    CHECK(hier.scales.mean() == doctest::Approx(1.0).epsilon(1e-9));
  }
  SUBCASE("insufficient super-patch overlap is an error") {
    // two compact clusters of patches joined by a patch edge whose node
    // overlap stays below d+1
    PatchGraph pg;
    pg.patches.resize(4);
    const Index d = 3;
    const Matrix coords = random_points(40, d, 23);
    const auto set_patch = [&](Index k, std::vector<NodeId> ids) {
      pg.patches[k].ids = std::move(ids);
      pg.patches[k].coords = Matrix(pg.patches[k].ids.size(), d);
      for (std::size_t r = 0; r < pg.patches[k].ids.size(); ++r) {
        pg.patches[k].coords.row(r) = coords.row(static_cast<Index>(pg.patches[k].ids[r]));
      }
    };
    set_patch(0, {0, 1, 2, 3, 4, 5, 6, 7});
    set_patch(1, {0, 1, 2, 3, 4, 5, 6, 8});
    set_patch(2, {20, 21, 22, 23, 24, 25, 26, 7});
    set_patch(3, {20, 21, 22, 23, 24, 25, 26, 8});
    pg.edges.push_back({0, 1, {}});
    pg.edges.push_back({2, 3, {}});
    pg.edges.push_back({1, 2, {}});
    pg.recompute_overlaps();
    // cross-cluster overlaps are {7} and {8}: too small for d+1 = 4
    CHECK_THROWS_WITH_AS(hierarchical_align(pg, 2, {}), doctest::Contains("super-patch"), Error);
  }
}

TEST_SUITE_END();
