#pragma once

// Shared synthetic temporal data for the anomaly tests: every day is a
// perturbed similarity transform of one ground-truth embedding, connected
// over small lags. Injections are specified in the ground-truth frame and
// mapped through the day's transform, so their aligned-frame magnitude is
// exact.

#include <vector>

#include "l2g/anomaly.hpp"
#include "l2g/eval.hpp"
#include "l2g/rng.hpp"

namespace l2g_test {

struct TemporalFixture {
  l2g::TemporalPatches role;
  l2g::Matrix truth;
  std::vector<l2g::Matrix> day_rotation;
  std::vector<double> day_scale;

  /// Displace `node` on day index `day` by a vector of norm `magnitude`
  /// (ground-truth frame), direction drawn from `rng`.
  void inject(l2g::Index node, l2g::Index day, double magnitude, l2g::Rng& rng) {
    using namespace l2g;
    RowVector dir(truth.cols());
    for (Index j = 0; j < truth.cols(); ++j) dir[j] = rng.normal();
    dir.normalize();
    const Index row = role.pg.patches[day].local_index(static_cast<NodeId>(node));
    role.pg.patches[day].coords.row(row) +=
        day_scale[day] * (magnitude * dir) * day_rotation[day];
  }
};

inline TemporalFixture make_temporal_fixture(l2g::Index n, l2g::Index d, int num_days,
                                             double jitter, std::uint64_t seed,
                                             int max_lag = 2) {
  using namespace l2g;
  TemporalFixture fx;
  Rng rng(seed);
  fx.truth = Matrix(n, d);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < d; ++j) fx.truth(i, j) = rng.normal();
  }
  for (int t = 0; t < num_days; ++t) {
    Rng day_rng(seed, Rng::mix(0xda7, static_cast<std::uint64_t>(t)));
    const Matrix q = detail::random_orthogonal(d, day_rng);
    const double scale = day_rng.uniform(0.7, 1.4);
    RowVector shift(d);
    for (Index j = 0; j < d; ++j) shift[j] = day_rng.uniform(-3.0, 3.0);

    Patch patch;
    patch.ids.resize(n);
    for (Index i = 0; i < n; ++i) patch.ids[i] = static_cast<NodeId>(i);
    Matrix jittered = fx.truth;
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < d; ++j) jittered(i, j) += jitter * day_rng.normal();
    }
    patch.coords = (scale * jittered) * q;
    patch.coords.rowwise() += shift;

    fx.role.days.push_back(t + 1);
    fx.role.pg.patches.push_back(std::move(patch));
    fx.day_rotation.push_back(q);
    fx.day_scale.push_back(scale);
  }
  for (Index s = 0; s < num_days; ++s) {
    for (Index t = s + 1; t < num_days; ++t) {
      if (t - s <= max_lag) fx.role.pg.edges.push_back({s, t, {}});
    }
  }
  fx.role.pg.recompute_overlaps();
  return fx;
}

}  // namespace l2g_test
