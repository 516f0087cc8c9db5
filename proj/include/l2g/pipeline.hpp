#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "l2g/anomaly.hpp"
#include "l2g/common.hpp"
#include "l2g/embed.hpp"
#include "l2g/embedding.hpp"
#include "l2g/eval.hpp"
#include "l2g/expand.hpp"
#include "l2g/graph.hpp"
#include "l2g/partition.hpp"
#include "l2g/patch_graph.hpp"
#include "l2g/sparsify.hpp"
#include "l2g/sync.hpp"

// File-driven pipeline stages behind the CLI. Every stage reads and writes
// only files, so any stage can be rerun from the persisted artifacts of the
// previous one.

namespace l2g {

inline constexpr const char* kVersion = "0.1.0";

enum class ScaleSyncMode { on, off, automatic };

struct PipelineConfig {
  Index dim = 32;
  Index num_patches = 10;
  Index min_overlap = 0;   // 0 = 2*(dim+1)
  Index max_overlap = 0;   // 0 = 2*min_overlap
  Index target_degree = 4;
  ScaleSyncMode scale_sync = ScaleSyncMode::automatic;
  Index hierarchical = 0;  // 0 = flat alignment
  bool use_resistance = true;
  bool alg1_literal = false;
  std::string backend = "spectral";
  std::int64_t neg_samples = -1;  // -1 = auto, 0 = exhaustive
  std::uint64_t seed = 0;
  int jobs = 1;
  bool verbose = false;

  void resolve_defaults() {
    if (min_overlap == 0) min_overlap = 2 * (dim + 1);
    if (max_overlap == 0) max_overlap = 2 * min_overlap;
  }

  void validate() const {
    if (dim < 1) fail_config("config: dim must be positive");
    if (num_patches < 1) fail_config("config: num-patches must be positive");
    if (min_overlap < dim + 1) {
      fail_config("config: min overlap " + std::to_string(min_overlap) +
                  " must be at least d+1 = " + std::to_string(dim + 1));
    }
    if (max_overlap < 2 * min_overlap) {
      fail_config("config: max overlap " + std::to_string(max_overlap) +
                  " must be at least twice the min overlap");
    }
    if (target_degree < 2) fail_config("config: target degree must be at least 2");
    if (hierarchical < 0) fail_config("config: hierarchical cluster count must be non-negative");
    if (jobs < 1) fail_config("config: jobs must be positive");
  }
};

namespace detail {

inline void require_input(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) fail_data("input file does not exist: " + path.string());
}

inline double stage_seconds(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace detail

/// patches stage: load -> largest connected component -> FENNEL ->
/// patch graph -> sparsify -> expand; persists patches.txt and
/// patch_graph.txt under `out_dir`.
inline nlohmann::json stage_patches(const std::filesystem::path& graph_path,
                                    const std::filesystem::path& out_dir,
                                    const PipelineConfig& cfg) {
  cfg.validate();
  detail::require_input(graph_path);
  const auto t0 = std::chrono::steady_clock::now();

  SparseGraph g = load_edge_list(graph_path, GraphMode::undirected);
  const Index full_n = g.num_nodes();
  g = largest_connected_component(g);

  FennelOptions fopt;
  fopt.min_cluster_size = (cfg.dim + 2) / 2;  // ceil((d+1)/2)
  const Partition part = fennel_partition(g, cfg.num_patches, fopt);
  PatchGraph pg = build_patch_graph(g, part);

  SparsifyOptions sopt;
  sopt.use_resistance = cfg.use_resistance;
  sopt.alg1_literal = cfg.alg1_literal;
  sopt.seed = cfg.seed;
  pg = sparsify_patch_graph(pg, g, cfg.target_degree, sopt);
  pg = expand_patches(pg, g, cfg.min_overlap, cfg.max_overlap, cfg.seed);
  if (!pg.covers(g)) fail_numerical("patches stage violated the cover invariant");

  std::filesystem::create_directories(out_dir);
  save_patches(pg, out_dir / "patches.txt");
  save_patch_edges(pg, out_dir / "patch_graph.txt");

  nlohmann::json meta;
  meta["stage"] = "patches";
  meta["graph"] = graph_path.string();
  meta["nodes_total"] = full_n;
  meta["nodes_lcc"] = g.num_nodes();
  meta["edges_lcc"] = g.num_edges();
  meta["num_patches"] = pg.num_patches();
  meta["patch_edges"] = pg.edges.size();
  meta["seconds"] = detail::stage_seconds(t0);
  std::ofstream(out_dir / "patches_meta.json") << meta.dump(2) << '\n';
  return meta;
}

/// embed stage: one self-contained embedding per patch subgraph. The svd
/// backend embeds the symmetric bipartite view of the (undirected) patch
/// and keeps the source coordinates.
inline nlohmann::json stage_embed(const std::filesystem::path& graph_path,
                                  const std::filesystem::path& patches_dir,
                                  const std::filesystem::path& out_dir,
                                  const PipelineConfig& cfg) {
  cfg.validate();
  if (cfg.backend != "svd" && cfg.backend != "spectral") {
    fail_config("embed: unknown backend '" + cfg.backend + "'");
  }
  detail::require_input(graph_path);
  detail::require_input(patches_dir / "patches.txt");
  detail::require_input(patches_dir / "patch_graph.txt");
  const auto t0 = std::chrono::steady_clock::now();

  const SparseGraph g = load_edge_list(graph_path, GraphMode::undirected);
  PatchGraph pg = load_patch_graph(patches_dir / "patches.txt", patches_dir / "patch_graph.txt");
  std::filesystem::create_directories(out_dir);

  const auto embed_one = [&](Index k) {
    const SparseGraph sub = induced_subgraph(g, pg.patches[k].ids);
    EmbeddingMatrix emb;
    if (cfg.backend == "spectral") {
      emb = spectral_embed(sub, cfg.dim, Rng::mix(cfg.seed, static_cast<std::uint64_t>(k)));
    } else {
      std::vector<std::pair<NodeId, NodeId>> directed;
      for (Index u = 0; u < sub.num_nodes(); ++u) {
        for (Index v : sub.neighbors(u)) {
          directed.emplace_back(sub.node_id(u), sub.node_id(v));
        }
      }
      const SparseGraph bip = SparseGraph::bipartite(std::move(directed));
      const BipartiteEmbedding b =
          svd_bipartite_embed(bip, cfg.dim, Rng::mix(cfg.seed, static_cast<std::uint64_t>(k)));
      emb = b.sources;
    }
    save_embedding_binary(emb, out_dir / ("patch_" + std::to_string(k) + ".l2ge"));
  };

  if (cfg.jobs <= 1) {
    for (Index k = 0; k < pg.num_patches(); ++k) embed_one(k);
  } else {
    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> errors(cfg.jobs);
    for (int w = 0; w < cfg.jobs; ++w) {
      workers.emplace_back([&, w] {
        try {
          for (Index k = w; k < pg.num_patches(); k += cfg.jobs) embed_one(k);
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : workers) t.join();
    for (const auto& err : errors) {
      if (err) std::rethrow_exception(err);
    }
  }

  nlohmann::json meta;
  meta["stage"] = "embed";
  meta["backend"] = cfg.backend;
  meta["dim"] = cfg.dim;
  meta["graph"] = graph_path.string();
  meta["num_patches"] = pg.num_patches();
  meta["seconds"] = detail::stage_seconds(t0);
  std::ofstream(out_dir / "meta.json") << meta.dump(2) << '\n';
  return meta;
}

/// align stage: attach coordinates, run the (possibly hierarchical)
/// alignment, write the stitched embedding and a diagnostics file.
inline nlohmann::json stage_align(const std::filesystem::path& patches_dir,
                                  const std::filesystem::path& coords_dir,
                                  const std::filesystem::path& out_path,
                                  const PipelineConfig& cfg) {
  cfg.validate();
  detail::require_input(patches_dir / "patches.txt");
  detail::require_input(patches_dir / "patch_graph.txt");
  const auto t0 = std::chrono::steady_clock::now();

  PatchGraph pg = load_patch_graph(patches_dir / "patches.txt", patches_dir / "patch_graph.txt");
  load_patch_coords(coords_dir, pg);

  bool scale_sync = false;
  switch (cfg.scale_sync) {
    case ScaleSyncMode::on:
      scale_sync = true;
      break;
    case ScaleSyncMode::off:
      scale_sync = false;
      break;
    case ScaleSyncMode::automatic: {
      // the svd backend normalizes globally, so scale synchronization helps;
      // externally trained coordinates default to off
      scale_sync = false;
      const auto meta_path = coords_dir / "meta.json";
      if (std::filesystem::exists(meta_path)) {
        nlohmann::json meta;
        std::ifstream(meta_path) >> meta;
        scale_sync = meta.value("backend", "") == "svd";
      }
      break;
    }
  }

  AlignOptions opt;
  opt.scale_sync = scale_sync;
  opt.seed = cfg.seed;
  const AlignmentResult result = cfg.hierarchical > 0
                                     ? hierarchical_align(pg, cfg.hierarchical, opt)
                                     : align_patches(pg, opt);

  if (out_path.has_parent_path()) std::filesystem::create_directories(out_path.parent_path());
  save_embedding_binary(result.stitched, out_path);

  nlohmann::json diag;
  diag["stage"] = "align";
  diag["scale_sync"] = scale_sync;
  diag["hierarchical"] = cfg.hierarchical;
  diag["num_patches"] = pg.num_patches();
  diag["dim"] = pg.dim();
  diag["scale_iterations"] = result.diag.scale_iterations;
  diag["scale_residual"] = result.diag.scale_residual;
  diag["rotation_residuals"] = result.diag.rotation_residuals;
  diag["translation_relative_residual"] = result.diag.translation_relative_residual;
  diag["lsq_residual"] = result.diag.lsq_residual;
  diag["seconds"] = {{"estimate", result.diag.seconds_estimate},
                     {"scale", result.diag.seconds_scale},
                     {"rotation", result.diag.seconds_rotation},
                     {"translation", result.diag.seconds_translation},
                     {"stitch", result.diag.seconds_stitch},
                     {"total", detail::stage_seconds(t0)}};
  std::ofstream(out_path.string() + ".diag.json") << diag.dump(2) << '\n';
  return diag;
}

inline nlohmann::json stage_eval_recon(const std::filesystem::path& emb_path,
                                       const std::filesystem::path& graph_path,
                                       std::int64_t neg_samples, std::uint64_t seed) {
  detail::require_input(emb_path);
  detail::require_input(graph_path);
  const EmbeddingMatrix emb = load_embedding(emb_path);
  const SparseGraph g = load_edge_list(graph_path, GraphMode::undirected);

  std::int64_t neg = neg_samples;
  if (neg < 0) {
    // auto: exact AUC on small graphs, capped sampling on large ones
    neg = g.num_nodes() <= 2000 ? 0 : std::min<std::int64_t>(10 * g.num_edges(), 1000000);
  }
  const AucResult res = reconstruction_auc(emb, g, neg, seed);
  nlohmann::json out;
  out["auc"] = res.auc;
  out["m"] = res.positives;
  out["negatives"] = res.negatives;
  out["exhaustive"] = neg == 0;
  return out;
}

/// synth stage: generate a synthetic patch problem and persist it in the
/// same artifact layout the patches/embed stages produce, plus the ground
/// truth for later comparison.
inline nlohmann::json stage_synth(Index n, Index d, Index p, Index overlap, double sigma,
                                  std::uint64_t seed, const std::filesystem::path& out_dir) {
  const SyntheticProblem problem = generate_synthetic(n, d, p, overlap, sigma, seed);
  std::filesystem::create_directories(out_dir / "coords");
  save_patches(problem.patch_graph, out_dir / "patches.txt");
  save_patch_edges(problem.patch_graph, out_dir / "patch_graph.txt");
  save_embedding_binary(problem.ground_truth, out_dir / "ground_truth.l2ge");
  for (Index k = 0; k < problem.patch_graph.num_patches(); ++k) {
    const auto& patch = problem.patch_graph.patches[k];
    save_embedding_binary(EmbeddingMatrix(patch.coords, patch.ids),
                          out_dir / "coords" / ("patch_" + std::to_string(k) + ".l2ge"));
  }
  nlohmann::json meta;
  meta["stage"] = "synth";
  meta["backend"] = "synthetic";
  meta["n"] = n;
  meta["dim"] = d;
  meta["num_patches"] = p;
  meta["overlap"] = overlap;
  meta["sigma"] = sigma;
  meta["seed"] = seed;
  std::ofstream(out_dir / "coords" / "meta.json") << meta.dump(2) << '\n';
  std::ofstream(out_dir / "synth_meta.json") << meta.dump(2) << '\n';
  return meta;
}

struct AnomalyConfig {
  Index dim = 8;
  std::vector<int> lags = {1, 7, 14, 21, 28, 35, 42, 49};
  int min_obs = 21;
  double quantile = 0.999;
  ScaleSyncMode scale_sync = ScaleSyncMode::automatic;  // automatic = on (svd backend)
  std::uint64_t seed = 0;
};

/// anomaly stage: daily bipartite SVD patches, lagged alignment per role,
/// leave-one-out z-scores and outlier flags; writes per-role CSV tables and
/// a JSON summary.
inline nlohmann::json stage_anomaly(const std::filesystem::path& flows_path,
                                    const std::filesystem::path& out_dir,
                                    const AnomalyConfig& cfg) {
  detail::require_input(flows_path);
  if (cfg.min_obs < 3) fail_config("anomaly: min-obs must be at least 3");
  if (!(cfg.quantile > 0.5 && cfg.quantile < 1.0)) {
    fail_config("anomaly: quantile must lie in (0.5, 1)");
  }
  const auto t0 = std::chrono::steady_clock::now();

  const std::map<int, SparseGraph> snapshots = load_daily_graphs(flows_path, GraphMode::bipartite);
  const TemporalPatchSet tps = build_temporal_patches(snapshots, cfg.dim, cfg.lags, cfg.seed);

  AlignOptions opt;
  opt.scale_sync = cfg.scale_sync != ScaleSyncMode::off;
  opt.seed = cfg.seed;

  std::filesystem::create_directories(out_dir);
  nlohmann::json summary;
  summary["stage"] = "anomaly";
  summary["days"] = tps.sources.days.size();
  summary["dim"] = cfg.dim;
  summary["lags"] = cfg.lags;
  summary["min_obs"] = cfg.min_obs;
  summary["quantile"] = cfg.quantile;

  const auto run_role = [&](const TemporalPatches& role, const char* name) {
    const AlignmentResult alignment = reference_embedding(role, opt);
    AnomalySeries series = raw_anomaly_scores(role, alignment);
    standardized_scores(series, cfg.min_obs);
    const OutlierReport report = outlier_flags(series, cfg.quantile);
    write_scores_csv(series, report, out_dir / (std::string(name) + "_scores.csv"));
    save_embedding_binary(alignment.stitched, out_dir / (std::string(name) + "_reference.l2ge"));

    nlohmann::json role_json;
    role_json["threshold"] = report.threshold;
    role_json["num_scores"] = report.num_scores;
    role_json["low_sample_warning"] = report.low_sample_warning;
    nlohmann::json counts = nlohmann::json::object();
    for (const auto& [day, count] : report.per_day_counts) {
      counts[std::to_string(day)] = count;
    }
    role_json["per_day_outliers"] = counts;
    summary[name] = role_json;
  };
  run_role(tps.sources, "source");
  run_role(tps.destinations, "destination");

  summary["seconds"] = detail::stage_seconds(t0);
  std::ofstream(out_dir / "summary.json") << summary.dump(2) << '\n';
  return summary;
}

/// Full pipeline: patches -> embed -> align -> eval, all artifacts under
/// `out_dir`, with a run manifest. Inputs are validated before anything is
/// written.
inline nlohmann::json run_pipeline(const std::filesystem::path& graph_path,
                                   const std::filesystem::path& out_dir,
                                   const PipelineConfig& cfg) {
  cfg.validate();
  detail::require_input(graph_path);
  const auto t0 = std::chrono::steady_clock::now();

  nlohmann::json manifest;
  manifest["version"] = kVersion;
  manifest["seed"] = cfg.seed;
  manifest["graph"] = graph_path.string();
  manifest["config"] = {{"dim", cfg.dim},
                        {"num_patches", cfg.num_patches},
                        {"min_overlap", cfg.min_overlap},
                        {"max_overlap", cfg.max_overlap},
                        {"target_degree", cfg.target_degree},
                        {"backend", cfg.backend},
                        {"hierarchical", cfg.hierarchical},
                        {"resistance", cfg.use_resistance}};

  manifest["patches"] = stage_patches(graph_path, out_dir / "patches", cfg);
  manifest["embed"] = stage_embed(graph_path, out_dir / "patches", out_dir / "coords", cfg);
  manifest["align"] =
      stage_align(out_dir / "patches", out_dir / "coords", out_dir / "stitched.l2ge", cfg);
  manifest["eval"] =
      stage_eval_recon(out_dir / "stitched.l2ge", graph_path, cfg.neg_samples, cfg.seed);
  manifest["seconds"] = detail::stage_seconds(t0);

  std::ofstream(out_dir / "run_manifest.json") << manifest.dump(2) << '\n';
  return manifest;
}

}  // namespace l2g
