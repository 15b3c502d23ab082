#pragma once

#include <filesystem>
#include <optional>

#include "json.hpp"
#include "magr/config.hpp"
#include "magr/dataset.hpp"
#include "magr/evaluation.hpp"
#include "magr/topology.hpp"
#include "magr/training.hpp"

namespace magr {

inline constexpr int kSchemaVersion = 1;

struct PreparedData {
  MagDataset ds;
  CandidateGraphs graphs;
  std::optional<RewireStats> rewire;
  std::string knn_features;  // what the candidate kNN actually used
};

/// Load or generate the dataset, apply edge controls, build candidates.
PreparedData prepare_data(const RunConfig& cfg);
MagDataset load_or_generate(const RunConfig& cfg);

struct ExperimentResult {
  nlohmann::json results;
  TrainResult train;
  RetrievalReport test;
  RetrievalReport val;
};

/// Full pipeline: data, candidates, training, final test report.
ExperimentResult run_experiment(const RunConfig& cfg, const TrainHooks& hooks = {});

/// results.json, epochs.jsonl and config.resolved.toml (plus optional
/// selected_depths.csv) in `out`.
void write_experiment(const ExperimentResult& r, const RunConfig& cfg,
                      const std::filesystem::path& out);

/// kNN overlap, neighbor purity, depth sweep and hard-query support.
nlohmann::json run_diagnostics(const RunConfig& cfg,
                               const std::optional<std::filesystem::path>& out = std::nullopt);

/// Restart convergence, collapse and gap contraction trials with pass flags.
nlohmann::json run_oracles(const RunConfig& cfg);

/// One experiment per sweep value of depth, alpha or beta.
nlohmann::json run_sweep(const RunConfig& cfg);

/// One experiment per configured seed (train seed), with mean and n-1 stddev.
MultiSeedSummary run_multiseed(const RunConfig& cfg);

/// Writes pretty JSON with a trailing newline.
void write_json(const nlohmann::json& j, const std::filesystem::path& path);

}  // namespace magr
