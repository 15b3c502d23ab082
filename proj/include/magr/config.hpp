#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "magr/dataset.hpp"
#include "magr/objective.hpp"
#include "magr/topology.hpp"
#include "magr/training.hpp"

namespace magr {

/// Flat "section.key" -> raw value text from a TOML-style file. Supported
/// values: numbers, true/false, double-quoted strings and one-line arrays.
class ConfigTable {
 public:
  static ConfigTable parse(std::string_view text);

  /// Applies "section.key=value" on top of the parsed entries.
  void set(std::string_view assignment);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& entries() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

struct DataSourceConfig {
  /// "synthetic" or "files".
  std::string kind = "synthetic";
  SynthConfig synthetic;
  DatasetPaths paths;
};

struct AblationConfig {
  bool no_cross_modal = false;     // beta = 0
  bool no_restart = false;         // alpha = 0
  bool uniform_readout = false;    // omega = 1/(K+1)
  bool uniform_operators = false;  // no topology learning
};

struct ControlConfig {
  std::optional<RewireMode> randomize_edges;
  bool allow_self_pairs = false;
  bool only_self_pairs = false;
  bool adapter_only = false;
};

struct DiagnoseConfig {
  std::size_t k = 10;
  std::vector<std::size_t> depths{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12};
  double low_quantile = 0.25;
  double high_quantile = 0.75;
  std::size_t max_pairs = 50000;
};

struct OracleConfig {
  std::size_t nodes = 32;  // per modality; the joint operator is 2N x 2N
  std::size_t trials = 20;
  std::vector<double> alphas{0.1, 0.3, 0.5, 1.0};
  std::vector<double> betas{0.1, 0.25, 0.4};
  std::size_t gap_steps = 20;
  std::size_t collapse_steps = 100;
  std::uint64_t seed = 43;
};

struct SweepConfig {
  /// "depth", "alpha" or "beta".
  std::string param = "depth";
  std::vector<double> values{0, 1, 2, 4, 8};
};

struct RunConfig {
  DataSourceConfig data;
  SplitConfig split;
  CandidateConfig candidates;
  /// "frozen" (input features) or "adapted" (initial adapter output).
  std::string knn_features = "frozen";
  ModelConfig model;
  LossWeights loss;
  TrainConfig train;
  AblationConfig ablation;
  ControlConfig control;
  bool full_gallery = false;
  bool export_depths = false;
  DiagnoseConfig diagnose;
  OracleConfig oracles;
  SweepConfig sweep;
  std::vector<std::uint64_t> seeds{43, 44, 45};

  /// Throws ErrorKind::Config listing every violated field.
  void validate() const;
  /// Model settings with the ablation and control switches applied.
  ModelConfig effective_model() const;
  CandidateConfig effective_candidates() const;
  /// "control-only" when self-pair answer edges are enabled, else "in-protocol".
  std::string protocol() const;
};

/// Builds a RunConfig from a table; unknown keys and bad values are config errors.
RunConfig run_config_from(const ConfigTable& table);
RunConfig load_run_config(const std::optional<std::filesystem::path>& path,
                          const std::vector<std::string>& overrides);

/// Resolved config with every default materialized, in the input format.
std::string to_config_text(const RunConfig& cfg);

}  // namespace magr
