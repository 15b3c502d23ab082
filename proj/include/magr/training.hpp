#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "magr/dataset.hpp"
#include "magr/evaluation.hpp"
#include "magr/objective.hpp"
#include "magr/topology.hpp"

namespace magr {

enum class CheckpointMetric { RecallAt10, WeightedRecall };
const char* to_string(CheckpointMetric m);

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Capped at |train| when larger.
  std::size_t batch_size = 512;
  std::size_t epochs = 60;
  std::size_t warmup_epochs = 5;
  /// Full-objective epochs without a validation improvement before stopping.
  std::size_t patience = 15;
  CheckpointMetric metric = CheckpointMetric::RecallAt10;
  std::uint64_t seed = 43;

  void validate() const;
};

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::size_t step = 0;
};

AdamState adam_init(const ModelParams& params);

/// Which parameter groups an update touches.
struct GroupMask {
  bool adapter = true;
  bool scorer = true;
  bool readout = true;

  bool allows(ParamGroup g) const;
};

/// One bias-corrected Adam update in slot order; increments state.step first.
/// Masked groups keep their parameters and moments untouched.
void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const TrainConfig& cfg, const GroupMask& mask = {});

struct EpochLog {
  std::size_t epoch = 0;
  std::string phase;  // "init", "warmup", "full"
  LossBreakdown loss;  // mean over the epoch's batches
  DirectionMetrics val;
  bool improved = false;
};

struct Checkpoint {
  std::size_t epoch = 0;
  ModelParams params;
  double metric = 0.0;
  double tie_break = 0.0;  // validation MRR
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochLog> log;
  std::size_t epochs_run = 0;
  bool aborted = false;
  std::string abort_reason;
  bool early_stopped = false;
};

struct TrainHooks {
  /// Called with the split and node ids of every retrieval evaluation.
  std::function<void(Split, std::span<const std::size_t>)> on_evaluate;
  /// Called after each epoch with the live parameters.
  std::function<void(std::size_t, const ModelParams&)> on_epoch;
};

/// Seeded training: warm-up epochs train the adapters on L_lin alone, later
/// epochs the full objective; each epoch ends with a validation retrieval
/// pass that drives checkpoint selection (R@10, then MRR).
TrainResult train(const MagDataset& ds, const CandidateGraphs& graphs, const ModelConfig& model,
                  const LossWeights& weights, const TrainConfig& cfg,
                  const TrainHooks& hooks = {});

/// Same, from given initial parameters.
TrainResult train_from(ModelParams init, const MagDataset& ds, const CandidateGraphs& graphs,
                       const ModelConfig& model, const LossWeights& weights,
                       const TrainConfig& cfg, const TrainHooks& hooks = {});

/// Validation-style retrieval of the refined embeddings on a node set (queries = gallery).
RetrievalReport evaluate_split(const ModelParams& params, const MagDataset& ds,
                               const CandidateGraphs& graphs, const ModelConfig& model,
                               Split split, bool full_gallery = false);

nlohmann::json to_json(const EpochLog& e);

/// Checkpoint directory: one MAGF file per parameter tensor plus manifest.json.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir);
Checkpoint load_checkpoint(const ModelParams& like, const std::filesystem::path& dir);

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::map<std::string, double> metrics;
};

struct MultiSeedSummary {
  std::vector<SeedOutcome> runs;
  std::map<std::string, double> mean;
  /// Sample standard deviation (n - 1); 0 for a single successful run.
  std::map<std::string, double> stddev;
};

/// Runs `run` once per seed; failed seeds are recorded and left out of the aggregate.
MultiSeedSummary multi_seed_run(std::span<const std::uint64_t> seeds,
                                const std::function<std::map<std::string, double>(std::uint64_t)>& run);

void aggregate(MultiSeedSummary& summary);

nlohmann::json to_json(const MultiSeedSummary& s);

}  // namespace magr
