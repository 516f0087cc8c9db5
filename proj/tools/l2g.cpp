// l2g: decompose a graph into overlapping patches, embed them
// independently, and stitch the patch embeddings into one global node
// embedding by group synchronization; includes an edge-reconstruction
// evaluator and a temporal anomaly-scoring pipeline.

#include <cstdio>
#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "l2g/pipeline.hpp"

namespace {

int exit_code(l2g::ErrorKind kind) {
  switch (kind) {
    case l2g::ErrorKind::config:
      return 2;
    case l2g::ErrorKind::data:
      return 3;
    case l2g::ErrorKind::numerical:
      return 4;
  }
  return 1;
}

l2g::ScaleSyncMode parse_scale_sync(const std::string& mode) {
  if (mode == "on") return l2g::ScaleSyncMode::on;
  if (mode == "off") return l2g::ScaleSyncMode::off;
  if (mode == "auto") return l2g::ScaleSyncMode::automatic;
  l2g::fail_config("unknown scale-sync mode '" + mode + "' (expected on, off, or auto)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"local2global graph embedding toolkit"};
  app.require_subcommand(1);

  l2g::PipelineConfig cfg;
  std::string scale_sync = "auto";
  std::string resistance = "on";
  app.add_option("--seed", cfg.seed, "random seed for every sampled quantity");
  app.add_option("--jobs", cfg.jobs, "worker threads for per-patch embedding");
  app.add_flag("--verbose", cfg.verbose, "log stage progress to stderr");

  std::string graph_path, out_path, patches_dir, coords_dir;

  auto* patches = app.add_subcommand("patches", "partition, sparsify, and expand into patches");
  patches->add_option("--graph", graph_path, "edge list")->required();
  patches->add_option("--num-patches", cfg.num_patches, "number of patches");
  patches->add_option("--dim", cfg.dim, "embedding dimension the patches must support");
  patches->add_option("--min-overlap", cfg.min_overlap, "lower overlap bound l (default 2(d+1))");
  patches->add_option("--max-overlap", cfg.max_overlap, "upper overlap bound u (default 2l)");
  patches->add_option("--target-degree", cfg.target_degree, "patch-graph mean degree k");
  patches->add_option("--resistance", resistance, "effective-resistance weighting {on,off}");
  patches->add_flag("--alg1-literal", cfg.alg1_literal,
                    "sample (k-1)p+1 extra edges instead of targeting mean degree k");
  patches->add_option("--out", out_path, "output directory")->required();

  auto* embed = app.add_subcommand("embed", "embed each patch independently");
  embed->add_option("--backend", cfg.backend, "embedding backend {svd,spectral}");
  embed->add_option("--patches", patches_dir, "patches directory")->required();
  embed->add_option("--graph", graph_path, "edge list")->required();
  embed->add_option("--dim", cfg.dim, "embedding dimension");
  embed->add_option("--out", out_path, "output directory")->required();

  auto* align = app.add_subcommand("align", "synchronize and stitch patch embeddings");
  align->add_option("--patches", patches_dir, "patches directory")->required();
  align->add_option("--coords", coords_dir, "per-patch coordinate directory")->required();
  align->add_option("--scale-sync", scale_sync, "scale synchronization {on,off,auto}");
  align->add_option("--hierarchical", cfg.hierarchical,
                    "cluster the patch graph into N groups and align hierarchically");
  align->add_option("--out", out_path, "stitched embedding output file")->required();

  auto* recon = app.add_subcommand("eval-recon", "edge-reconstruction AUC of an embedding");
  std::string emb_path;
  recon->add_option("--emb", emb_path, "embedding file")->required();
  recon->add_option("--graph", graph_path, "edge list")->required();
  recon->add_option("--neg", cfg.neg_samples, "negative samples (0 = all non-edges, -1 = auto)");

  auto* proc = app.add_subcommand("eval-procrustes", "full-Procrustes distance of two embeddings");
  std::string a_path, b_path;
  proc->add_option("--a", a_path, "first embedding")->required();
  proc->add_option("--b", b_path, "second embedding")->required();

  auto* synth = app.add_subcommand("synth", "generate a synthetic patch problem");
  l2g::Index synth_n = 500, synth_overlap = 0;
  double synth_sigma = 0.0;
  synth->add_option("--nodes", synth_n, "number of nodes");
  synth->add_option("--dim", cfg.dim, "embedding dimension");
  synth->add_option("--num-patches", cfg.num_patches, "number of patches");
  synth->add_option("--overlap", synth_overlap, "target pairwise overlap (default 2(d+1))");
  synth->add_option("--noise", synth_sigma, "coordinate noise width");
  synth->add_option("--out", out_path, "output directory")->required();

  auto* anomaly = app.add_subcommand("anomaly", "temporal anomaly scores from daily flows");
  l2g::AnomalyConfig acfg;
  std::string lags_csv = "1,7,14,21,28,35,42,49";
  std::string flows_path;
  anomaly->add_option("--flows", flows_path, "temporal edge list (u v day)")->required();
  anomaly->add_option("--dim", acfg.dim, "embedding dimension");
  anomaly->add_option("--lags", lags_csv, "comma-separated day lags");
  anomaly->add_option("--min-obs", acfg.min_obs, "minimum observations per scored node");
  anomaly->add_option("--quantile", acfg.quantile, "outlier quantile");
  anomaly->add_option("--scale-sync", scale_sync, "scale synchronization {on,off,auto}");
  anomaly->add_option("--out", out_path, "output directory")->required();

  auto* run = app.add_subcommand("run", "full pipeline: patches, embed, align, eval");
  run->add_option("--graph", graph_path, "edge list")->required();
  run->add_option("--num-patches", cfg.num_patches, "number of patches");
  run->add_option("--dim", cfg.dim, "embedding dimension");
  run->add_option("--min-overlap", cfg.min_overlap, "lower overlap bound l (default 2(d+1))");
  run->add_option("--max-overlap", cfg.max_overlap, "upper overlap bound u (default 2l)");
  run->add_option("--target-degree", cfg.target_degree, "patch-graph mean degree k");
  run->add_option("--backend", cfg.backend, "embedding backend {svd,spectral}");
  run->add_option("--scale-sync", scale_sync, "scale synchronization {on,off,auto}");
  run->add_option("--hierarchical", cfg.hierarchical, "hierarchical cluster count (0 = flat)");
  run->add_option("--resistance", resistance, "effective-resistance weighting {on,off}");
  run->add_option("--neg", cfg.neg_samples, "negative samples for the eval stage");
  run->add_option("--out", out_path, "output directory")->required();

  // global flags (--seed, --jobs, --verbose) may appear after the
  // subcommand name as well
  for (auto* sub : app.get_subcommands({})) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    cfg.scale_sync = parse_scale_sync(scale_sync);
    if (resistance != "on" && resistance != "off") {
      l2g::fail_config("--resistance must be on or off");
    }
    cfg.use_resistance = resistance == "on";
    cfg.resolve_defaults();

    if (patches->parsed()) {
      const auto meta = l2g::stage_patches(graph_path, out_path, cfg);
      if (cfg.verbose) std::cerr << meta.dump(2) << '\n';
    } else if (embed->parsed()) {
      const auto meta = l2g::stage_embed(graph_path, patches_dir, out_path, cfg);
      if (cfg.verbose) std::cerr << meta.dump(2) << '\n';
    } else if (align->parsed()) {
      const auto diag = l2g::stage_align(patches_dir, coords_dir, out_path, cfg);
      if (cfg.verbose) std::cerr << diag.dump(2) << '\n';
    } else if (recon->parsed()) {
      const auto res = l2g::stage_eval_recon(emb_path, graph_path, cfg.neg_samples, cfg.seed);
      std::cout << res.dump(2) << '\n';
    } else if (proc->parsed()) {
      const double err = l2g::procrustes_error(l2g::load_embedding(a_path),
                                               l2g::load_embedding(b_path));
      std::printf("%.12g\n", err);
    } else if (synth->parsed()) {
      if (synth_overlap == 0) synth_overlap = 2 * (cfg.dim + 1);
      const auto meta = l2g::stage_synth(synth_n, cfg.dim, cfg.num_patches, synth_overlap,
                                         synth_sigma, cfg.seed, out_path);
      if (cfg.verbose) std::cerr << meta.dump(2) << '\n';
    } else if (anomaly->parsed()) {
      acfg.seed = cfg.seed;
      acfg.scale_sync = cfg.scale_sync;
      acfg.lags.clear();
      std::string token;
      for (char c : lags_csv + ",") {
        if (c == ',') {
          if (!token.empty()) acfg.lags.push_back(std::stoi(token));
          token.clear();
        } else {
          token += c;
        }
      }
      const auto summary = l2g::stage_anomaly(flows_path, out_path, acfg);
      std::cout << summary.dump(2) << '\n';
    } else if (run->parsed()) {
      const auto manifest = l2g::run_pipeline(graph_path, out_path, cfg);
      std::cout << manifest.dump(2) << '\n';
    }
  } catch (const l2g::Error& err) {
    std::cerr << "error: " << err.what() << '\n';
    return exit_code(err.kind());
  } catch (const std::exception& err) {
    std::cerr << "error: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
