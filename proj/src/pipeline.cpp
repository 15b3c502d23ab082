#include "magr/pipeline.hpp"

#include <cmath>
#include <fstream>

#include "magr/error.hpp"
#include "magr/log.hpp"
#include "magr/oracles.hpp"

namespace magr {

void write_json(const nlohmann::json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

MagDataset load_or_generate(const RunConfig& cfg) {
  if (cfg.data.kind == "synthetic") return generate_synthetic(cfg.data.synthetic, cfg.split);
  return load_dataset(cfg.data.paths, cfg.split);
}

PreparedData prepare_data(const RunConfig& cfg) {
  PreparedData p;
  p.ds = load_or_generate(cfg);
  if (cfg.control.randomize_edges) {
    SeededRng rng = SeededRng(cfg.train.seed).fork(11);
    RewireStats stats;
    p.ds = randomize_edges(p.ds, *cfg.control.randomize_edges, rng, &stats);
    p.rewire = stats;
  }
  const bool equal_widths = p.ds.features_v.cols() == p.ds.features_t.cols();
  if (cfg.knn_features == "frozen" && equal_widths) {
    p.knn_features = "frozen";
    p.graphs = build_candidates(p.ds, p.ds.features_v, p.ds.features_t, cfg.effective_candidates());
  } else {
    if (cfg.knn_features == "frozen") {
      log::info("feature widths differ; candidate kNN uses the initial adapter output");
    }
    SeededRng init_rng = SeededRng(cfg.train.seed).fork(1);
    const auto params = init_params(cfg.effective_model(), p.ds.features_v.cols(),
                                    p.ds.features_t.cols(), init_rng);
    const auto emb = adapt(params, p.ds);
    p.knn_features = "adapted";
    p.graphs = build_candidates(p.ds, emb.v, emb.t, cfg.effective_candidates());
  }
  return p;
}

namespace {

nlohmann::json dataset_summary(const MagDataset& ds) {
  return {{"nodes", ds.num_nodes()},
          {"edges", ds.edges.size()},
          {"feature_dim_v", ds.features_v.cols()},
          {"feature_dim_t", ds.features_t.cols()},
          {"train", ds.nodes_in(Split::Train).size()},
          {"val", ds.nodes_in(Split::Val).size()},
          {"test", ds.nodes_in(Split::Test).size()},
          {"categories", ds.categories.has_value()}};
}

nlohmann::json candidate_summary(const CandidateGraphs& g, const std::string& knn) {
  nlohmann::json j{{"mode", to_string(g.config.mode)},
                   {"k_intra", g.config.k_intra},
                   {"k_cross", g.config.k_cross},
                   {"self_pairs", to_string(g.config.self_pairs)},
                   {"knn_features", knn}};
  for (Channel c : kChannels) j["edges"][to_string(c)] = g[c].nnz();
  return j;
}

std::string variant_name(const RunConfig& cfg) {
  std::vector<std::string> parts;
  if (cfg.control.adapter_only) parts.emplace_back("adapter-only");
  if (cfg.ablation.no_cross_modal) parts.emplace_back("no-cross-modal");
  if (cfg.ablation.no_restart) parts.emplace_back("no-restart");
  if (cfg.ablation.uniform_readout) parts.emplace_back("uniform-readout");
  if (cfg.ablation.uniform_operators) parts.emplace_back("uniform-operators");
  if (cfg.control.randomize_edges) {
    parts.emplace_back(*cfg.control.randomize_edges == RewireMode::UniformRandom ? "random-edges"
                                                                                 : "degree-rewired");
  }
  if (cfg.control.allow_self_pairs) parts.emplace_back("self-pairs-allowed");
  if (cfg.control.only_self_pairs) parts.emplace_back("self-pairs-only");
  if (parts.empty()) return "full";
  std::string out = parts.front();
  for (std::size_t i = 1; i < parts.size(); ++i) out += "+" + parts[i];
  return out;
}

}  // namespace

ExperimentResult run_experiment(const RunConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  const PreparedData data = prepare_data(cfg);
  const ModelConfig model = cfg.effective_model();
  ExperimentResult r;
  r.train = train(data.ds, data.graphs, model, cfg.loss, cfg.train, hooks);
  const auto& best = r.train.best.params;
  if (hooks.on_evaluate) hooks.on_evaluate(Split::Val, data.ds.nodes_in(Split::Val));
  r.val = evaluate_split(best, data.ds, data.graphs, model, Split::Val, cfg.full_gallery);
  if (hooks.on_evaluate) hooks.on_evaluate(Split::Test, data.ds.nodes_in(Split::Test));
  r.test = evaluate_split(best, data.ds, data.graphs, model, Split::Test, cfg.full_gallery);

  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["protocol"] = cfg.protocol();
  j["variant"] = variant_name(cfg);
  j["config"] = to_config_text(cfg);
  j["dataset"] = dataset_summary(data.ds);
  j["candidates"] = candidate_summary(data.graphs, data.knn_features);
  if (data.rewire) {
    j["rewire"] = {{"mode", to_string(*cfg.control.randomize_edges)},
                   {"accepted_swaps", data.rewire->accepted_swaps},
                   {"attempts", data.rewire->attempts}};
  }
  j["training"] = {{"best_epoch", r.train.best.epoch},
                   {"best_val_R@10", r.train.best.metric},
                   {"best_val_MRR", r.train.best.tie_break},
                   {"epochs_run", r.train.epochs_run},
                   {"early_stopped", r.train.early_stopped},
                   {"aborted", r.train.aborted}};
  if (r.train.aborted) j["training"]["abort_reason"] = r.train.abort_reason;
  j["val"] = to_json(r.val);
  j["test"] = to_json(r.test);
  j["gallery"] = cfg.full_gallery ? "full" : "split";
  r.results = std::move(j);
  return r;
}

void write_experiment(const ExperimentResult& r, const RunConfig& cfg,
                      const std::filesystem::path& out) {
  std::filesystem::create_directories(out);
  write_json(r.results, out / "results.json");
  {
    std::ofstream log_out(out / "epochs.jsonl", std::ios::trunc);
    if (!log_out) throw Error(ErrorKind::Io, "cannot write epoch log in " + out.string());
    for (const auto& e : r.train.log) log_out << to_json(e).dump() << '\n';
  }
  {
    std::ofstream cfg_out(out / "config.resolved.toml", std::ios::trunc);
    if (!cfg_out) throw Error(ErrorKind::Io, "cannot write resolved config in " + out.string());
    cfg_out << to_config_text(cfg);
  }
  save_checkpoint(r.train.best, out / "checkpoint");
  if (cfg.export_depths && !cfg.control.adapter_only) {
    const PreparedData data = prepare_data(cfg);
    const auto fs = forward(r.train.best.params, data.ds, data.graphs, cfg.effective_model());
    write_selected_depths(fs.readout, out / "selected_depths.csv");
  }
}

nlohmann::json run_diagnostics(const RunConfig& cfg,
                               const std::optional<std::filesystem::path>& out) {
  cfg.validate();
  const MagDataset ds = load_or_generate(cfg);
  const auto& d = cfg.diagnose;
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["config"] = to_config_text(cfg);
  j["dataset"] = dataset_summary(ds);

  const std::size_t k = std::min(d.k, ds.num_nodes() - 1);
  const OverlapReport overlap = knn_overlap(ds.features_v, ds.features_t, k);
  j["knn_overlap"] = {{"k", k}, {"mean", overlap.mean}, {"median", overlap.median}};

  if (ds.categories) {
    j["purity"] = {{"available", true},
                   {"k", k},
                   {"structural", neighbor_purity(ds, NeighborSource::Structural, k)},
                   {"knn_v", neighbor_purity(ds, NeighborSource::KnnVisual, k)},
                   {"knn_t", neighbor_purity(ds, NeighborSource::KnnTextual, k)}};
  } else {
    j["purity"] = {{"available", false}, {"notice", "dataset has no categories"}};
    log::info("neighbor purity skipped: dataset has no categories");
  }

  std::optional<DepthSweepReport> sweep;
  if (ds.features_v.cols() == ds.features_t.cols()) {
    sweep = depth_sweep(ds, d.depths, d.max_pairs, cfg.split.seed);
    j["depth_sweep"] = to_json(*sweep);
    j["hard_queries"] = to_json(hard_query_support(ds, d.low_quantile, d.high_quantile));
  } else {
    j["depth_sweep"] = {{"available", false}, {"notice", "feature widths differ"}};
    j["hard_queries"] = {{"available", false}, {"notice", "feature widths differ"}};
  }

  if (out) {
    std::filesystem::create_directories(*out);
    write_json(j, *out / "diagnostics.json");
    if (sweep) write_depth_sweep_csv(*sweep, *out / "depth_sweep.csv");
    std::ofstream ov(*out / "knn_overlap.csv", std::ios::trunc);
    if (!ov) throw Error(ErrorKind::Io, "cannot write knn_overlap.csv");
    ov.precision(17);
    ov << "node,overlap\n";
    for (std::size_t i = 0; i < overlap.per_node.size(); ++i) {
      ov << i << ',' << overlap.per_node[i] << '\n';
    }
  }
  return j;
}

nlohmann::json run_oracles(const RunConfig& cfg) {
  cfg.validate();
  const auto& o = cfg.oracles;
  SeededRng root(o.seed);
  bool all_pass = true;
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["config"] = to_config_text(cfg);

  nlohmann::json restart = nlohmann::json::array();
  SeededRng rr = root.fork(1);
  for (double alpha : o.alphas) {
    bool converged = true, rate_ok = true;
    double worst_residual = 0.0;
    std::vector<double> rates;
    for (std::size_t t = 0; t < o.trials; ++t) {
      const auto trial = resolvent_trial(o.nodes, alpha, cfg.model.smoothing.beta, rr);
      converged &= trial.converged;
      rate_ok &= trial.rate_ok;
      worst_residual = std::max(worst_residual, trial.residual_at_bound);
      rates.push_back(trial.fitted_rate);
    }
    all_pass &= converged && rate_ok;
    restart.push_back({{"alpha", alpha},
                       {"expected_rate", 1.0 - alpha},
                       {"fitted_rates", rates},
                       {"max_residual_at_bound", worst_residual},
                       {"converged", converged},
                       {"rate_within_10pct", rate_ok}});
  }
  j["restart_convergence"] = restart;

  SeededRng cr = root.fork(2);
  bool collapsed = true;
  double worst_ratio = 0.0;
  for (std::size_t t = 0; t < o.trials; ++t) {
    const auto trial = collapse_trial(o.nodes, o.collapse_steps, cfg.model.smoothing.beta, cr);
    collapsed &= trial.collapsed;
    worst_ratio = std::max(worst_ratio, trial.ratio);
  }
  all_pass &= collapsed;
  j["collapse"] = {{"steps", o.collapse_steps}, {"max_ratio", worst_ratio}, {"collapsed", collapsed}};

  SeededRng gr = root.fork(3);
  nlohmann::json gap = nlohmann::json::array();
  for (double beta : o.betas) {
    bool ok = true;
    double worst_final = 0.0;
    for (std::size_t t = 0; t < o.trials; ++t) {
      const auto trial = gap_trial(o.nodes, 4, beta, o.gap_steps, gr);
      const bool pass = trial.non_increasing && trial.strictly_decreasing;
      // beta = 0 leaves the gap under intra-only dynamics; reported, not asserted.
      if (beta > 0.0) ok &= pass;
      worst_final = std::max(worst_final, trial.gaps.back() / trial.gaps.front());
    }
    if (beta > 0.0) all_pass &= ok;
    gap.push_back({{"beta", beta},
                   {"asserted", beta > 0.0},
                   {"contracting", ok},
                   {"max_final_ratio", worst_final}});
  }
  j["gap_contraction"] = gap;
  j["pass"] = all_pass;
  return j;
}

namespace {

std::map<std::string, double> headline(const RetrievalReport& r) {
  return {{"R@1", r.avg.r1},
          {"R@5", r.avg.r5},
          {"R@10", r.avg.r10},
          {"MRR", r.avg.mrr},
          {"MeanR", r.avg.mean_rank}};
}

}  // namespace

nlohmann::json run_sweep(const RunConfig& cfg) {
  cfg.validate();
  nlohmann::json j;
  j["schema_version"] = kSchemaVersion;
  j["config"] = to_config_text(cfg);
  j["param"] = cfg.sweep.param;
  j["runs"] = nlohmann::json::array();
  for (double v : cfg.sweep.values) {
    RunConfig c = cfg;
    if (cfg.sweep.param == "depth") {
      if (v < 0.0 || v != std::floor(v)) throw Error(ErrorKind::Config, "depth sweep values must be integers");
      c.model.smoothing.depth = static_cast<std::size_t>(v);
    } else if (cfg.sweep.param == "alpha") {
      c.model.smoothing.alpha = v;
    } else {
      c.model.smoothing.beta = v;
    }
    const auto r = run_experiment(c);
    j["runs"].push_back({{"value", v}, {"val", to_json(r.val)}, {"test", to_json(r.test)}});
  }
  return j;
}

MultiSeedSummary run_multiseed(const RunConfig& cfg) {
  cfg.validate();
  return multi_seed_run(cfg.seeds, [&](std::uint64_t seed) {
    RunConfig c = cfg;
    c.train.seed = seed;
    return headline(run_experiment(c).test);
  });
}

}  // namespace magr
