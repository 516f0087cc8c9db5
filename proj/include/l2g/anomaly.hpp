#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "l2g/common.hpp"
#include "l2g/embed.hpp"
#include "l2g/embedding.hpp"
#include "l2g/graph.hpp"
#include "l2g/patch_graph.hpp"
#include "l2g/sync.hpp"

// Temporal anomaly pipeline: one bipartite patch per day, patch edges
// between days whose gap lies in the lag set, a local2global reference
// embedding per node role, and leave-one-out z-scores of the per-day
// distances from the reference.

namespace l2g {

/// One role (source or destination) of the temporal patch construction.
struct TemporalPatches {
  std::vector<int> days;  // ascending, parallel to pg.patches
  PatchGraph pg;
};

struct TemporalPatchSet {
  TemporalPatches sources;
  TemporalPatches destinations;
  std::vector<int> lags;
  Index dim = 0;
};

namespace detail {

inline void build_lag_edges(TemporalPatches& role, const std::vector<int>& lags, Index d,
                            const char* label) {
  const Index p = role.pg.num_patches();
  for (Index s = 0; s < p; ++s) {
    for (Index t = s + 1; t < p; ++t) {
      const int gap = role.days[t] - role.days[s];
      if (std::find(lags.begin(), lags.end(), gap) == lags.end()) continue;
      PatchEdge e{s, t, {}};
      std::set_intersection(role.pg.patches[s].ids.begin(), role.pg.patches[s].ids.end(),
                            role.pg.patches[t].ids.begin(), role.pg.patches[t].ids.end(),
                            std::back_inserter(e.overlap));
      if (static_cast<Index>(e.overlap.size()) >= d + 1) role.pg.edges.push_back(std::move(e));
    }
  }
  if (!role.pg.connected()) {
    // list the components to make the failure actionable
    std::vector<Index> comp(p, -1);
    Index nc = 0;
    std::vector<std::vector<Index>> adj(p);
    for (const auto& e : role.pg.edges) {
      adj[e.i].push_back(e.j);
      adj[e.j].push_back(e.i);
    }
    for (Index s = 0; s < p; ++s) {
      if (comp[s] >= 0) continue;
      std::vector<Index> stack{s};
      comp[s] = nc;
      while (!stack.empty()) {
        const Index u = stack.back();
        stack.pop_back();
        for (Index v : adj[u]) {
          if (comp[v] < 0) {
            comp[v] = nc;
            stack.push_back(v);
          }
        }
      }
      ++nc;
    }
    std::string msg = std::string(label) + " lag patch graph is disconnected; components:";
    for (Index c = 0; c < nc; ++c) {
      msg += " {";
      bool first = true;
      for (Index s = 0; s < p; ++s) {
        if (comp[s] == c) {
          msg += (first ? "" : ",") + std::to_string(role.days[s]);
          first = false;
        }
      }
      msg += "}";
    }
    fail_data(msg);
  }
}

}  // namespace detail

/// Embed every daily snapshot with the bipartite SVD backend and connect
/// days whose gap lies in the lag set; edges with overlap below d+1 are
/// dropped and connectivity is verified per role.
inline TemporalPatchSet build_temporal_patches(const std::map<int, SparseGraph>& snapshots,
                                               Index d, const std::vector<int>& lags,
                                               std::uint64_t seed = 0) {
  if (snapshots.size() < 2) fail_config("temporal patches: need at least two days");
  if (lags.empty()) fail_config("temporal patches: lag set must not be empty");

  TemporalPatchSet tps;
  tps.lags = lags;
  tps.dim = d;
  for (const auto& [day, graph] : snapshots) {
    const BipartiteEmbedding emb =
        svd_bipartite_embed(graph, d, Rng::mix(seed, static_cast<std::uint64_t>(day)));

    Patch src;
    src.ids = emb.sources.ids();
    src.coords = emb.sources.coords();
    tps.sources.days.push_back(day);
    tps.sources.pg.patches.push_back(std::move(src));

    Patch dst;
    dst.ids = emb.destinations.ids();
    dst.coords = emb.destinations.coords();
    tps.destinations.days.push_back(day);
    tps.destinations.pg.patches.push_back(std::move(dst));
  }
  detail::build_lag_edges(tps.sources, lags, d, "source");
  detail::build_lag_edges(tps.destinations, lags, d, "destination");
  return tps;
}

/// Reference embedding of one role: align the daily patches (scale
/// synchronization on, matching the SVD backend) and stitch. The result
/// keeps the aligned per-day coordinates for scoring.
inline AlignmentResult reference_embedding(const TemporalPatches& role,
                                           const AlignOptions& opt = {.scale_sync = true}) {
  return align_patches(role.pg, opt);
}

/// Per-node, per-day anomaly observations for one role.
struct AnomalySeries {
  struct Node {
    NodeId id;
    std::vector<int> days;
    std::vector<double> raw;
    std::vector<double> z;
    std::vector<char> degenerate;  // z forced to 0 where sigma_-t ~ 0
    bool scored = false;           // meets the min_obs filter
  };
  std::vector<Node> nodes;
  int min_obs = 0;
};

/// Euclidean distance between the reference position and each day's aligned
/// position, per node, on the days the node was observed.
inline AnomalySeries raw_anomaly_scores(const TemporalPatches& role,
                                        const AlignmentResult& alignment) {
  AnomalySeries series;
  const auto& ref = alignment.stitched;
  std::map<NodeId, AnomalySeries::Node> nodes;
  for (Index k = 0; k < role.pg.num_patches(); ++k) {
    const auto& patch = role.pg.patches[k];
    for (Index r = 0; r < patch.size(); ++r) {
      auto& node = nodes[patch.ids[r]];
      node.id = patch.ids[r];
      node.days.push_back(role.days[k]);
      node.raw.push_back(
          (ref.row(ref.row_of(patch.ids[r])) - alignment.aligned[k].row(r)).norm());
    }
  }
  series.nodes.reserve(nodes.size());
  for (auto& [id, node] : nodes) series.nodes.push_back(std::move(node));
  return series;
}

/// Leave-one-out z-scores: for every node with at least min_obs
/// observations, standardize each day's raw score by the mean and sample
/// standard deviation of the node's other days. Degenerate spread
/// (sigma < 1e-12) yields score 0 plus a flag.
inline void standardized_scores(AnomalySeries& series, int min_obs) {
  if (min_obs < 3) fail_config("standardized scores: min_obs must be at least 3");
  series.min_obs = min_obs;
  for (auto& node : series.nodes) {
    const std::size_t count = node.raw.size();
    node.z.assign(count, 0.0);
    node.degenerate.assign(count, 0);
    node.scored = count >= static_cast<std::size_t>(min_obs);
    if (!node.scored) continue;

    double sum = 0.0;
    for (double r : node.raw) sum += r;
    for (std::size_t t = 0; t < count; ++t) {
      const double loo_n = static_cast<double>(count - 1);
      const double mean = (sum - node.raw[t]) / loo_n;
      // sample variance over the leave-one-out set (divisor count - 2)
      double ss = 0.0;
      for (std::size_t s = 0; s < count; ++s) {
        if (s == t) continue;
        const double dev = node.raw[s] - mean;
        ss += dev * dev;
      }
      const double sigma = std::sqrt(ss / (loo_n - 1.0));
      if (sigma < 1e-12) {
        node.degenerate[t] = 1;
        node.z[t] = 0.0;
      } else {
        node.z[t] = (node.raw[t] - mean) / sigma;
      }
    }
  }
}

struct OutlierReport {
  double threshold = 0.0;
  std::int64_t num_scores = 0;
  bool low_sample_warning = false;         // fewer than 100 scores
  std::map<int, int> per_day_counts;       // day -> outliers
  std::vector<std::pair<NodeId, int>> flagged;  // (node, day)
};

/// Flag every (node, day) whose standardized score strictly exceeds the
/// empirical `quantile` (nearest rank) of all scored observations.
inline OutlierReport outlier_flags(const AnomalySeries& series, double quantile) {
  if (!(quantile > 0.5 && quantile < 1.0)) {
    fail_config("outlier quantile must lie in (0.5, 1)");
  }
  std::vector<double> scores;
  for (const auto& node : series.nodes) {
    if (!node.scored) continue;
    scores.insert(scores.end(), node.z.begin(), node.z.end());
  }
  OutlierReport report;
  report.num_scores = static_cast<std::int64_t>(scores.size());
  report.low_sample_warning = scores.size() < 100;
  if (scores.empty()) return report;

  std::sort(scores.begin(), scores.end());
  const std::size_t rank = static_cast<std::size_t>(
      std::ceil(quantile * static_cast<double>(scores.size())));
  report.threshold = scores[std::min(rank, scores.size()) - 1];

  for (const auto& node : series.nodes) {
    if (!node.scored) continue;
    for (std::size_t t = 0; t < node.z.size(); ++t) {
      if (node.z[t] > report.threshold) {
        report.flagged.emplace_back(node.id, node.days[t]);
        report.per_day_counts[node.days[t]]++;
      }
    }
  }
  return report;
}

/// Score table as CSV: node_id, day, raw, z, flags.
inline void write_scores_csv(const AnomalySeries& series, const OutlierReport& report,
                             const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail_data("cannot write score table: " + path.string());
  std::map<std::pair<NodeId, int>, bool> outlier;
  for (const auto& [id, day] : report.flagged) outlier[{id, day}] = true;
  out << "node_id,day,raw,z,flags\n";
  char buf[64];
  for (const auto& node : series.nodes) {
    for (std::size_t t = 0; t < node.days.size(); ++t) {
      std::snprintf(buf, sizeof buf, "%.10g,%.10g", node.raw[t],
                    node.scored ? node.z[t] : 0.0);
      out << node.id << ',' << node.days[t] << ',' << buf << ',';
      if (!node.scored) {
        out << "unscored";
      } else if (node.degenerate[t]) {
        out << "degenerate";
      } else if (outlier.count({node.id, node.days[t]})) {
        out << "outlier";
      }
      out << '\n';
    }
  }
}

}  // namespace l2g
