#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "magr/rng.hpp"
#include "magr/tensor.hpp"

namespace magr {

/// Undirected structural edge stored with u < v.
struct Edge {
  std::size_t u = 0;
  std::size_t v = 0;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

enum class Split : std::uint8_t { Train, Val, Test };

const char* to_string(Split s);

struct SplitConfig {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
  std::uint64_t seed = 43;

  void validate() const;
};

/// Multimodal attributed graph: paired visual/textual features per node plus
/// undirected structure and a transductive split.
struct MagDataset {
  DenseMatrix features_v;
  DenseMatrix features_t;
  std::vector<Edge> edges;
  std::vector<Split> split;
  std::optional<std::vector<int>> categories;

  std::size_t num_nodes() const noexcept { return features_v.rows(); }
  std::vector<std::size_t> nodes_in(Split s) const;
  /// Throws if any invariant (shapes, edge uniqueness, split coverage) is broken.
  void validate() const;
};

/// Seeded Fisher-Yates over node ids, then contiguous slices train | val | test.
std::vector<Split> assign_split(std::size_t num_nodes, const SplitConfig& cfg);

struct SynthConfig {
  std::size_t num_nodes = 500;
  std::size_t num_classes = 8;
  std::size_t dim = 64;
  double p_in = 0.01;
  double p_out = 0.004;
  double sigma_v = 0.8;
  double sigma_t = 0.8;
  double theta = 0.7853981633974483;  // pi / 4
  std::uint64_t seed = 43;

  void validate() const;
};

/// Class-prototype generator with a seeded rotation of text prototypes by theta.
MagDataset generate_synthetic(const SynthConfig& cfg, const SplitConfig& split = {});

/// Orthogonal map rotating every vector by exactly `theta`: Q * blockdiag(R(theta)) * Q^T
/// with Q a seeded random orthogonal matrix. Odd dimensions keep one fixed axis.
DenseMatrix seeded_rotation(std::size_t dim, double theta, std::uint64_t seed);

enum class RewireMode { UniformRandom, DegreePreserving };

const char* to_string(RewireMode m);

struct RewireStats {
  std::size_t accepted_swaps = 0;
  std::size_t attempts = 0;
};

/// Null-model replacement of the structural edges; features and split untouched.
MagDataset randomize_edges(const MagDataset& ds, RewireMode mode, SeededRng& rng,
                           RewireStats* stats = nullptr);

std::vector<std::size_t> degree_sequence(std::size_t num_nodes, const std::vector<Edge>& edges);

// ---- files ----

void write_magf(const DenseMatrix& m, const std::filesystem::path& path);
DenseMatrix read_magf(const std::filesystem::path& path);
DenseMatrix read_csv_matrix(const std::filesystem::path& path);
/// MAGF when the file starts with the magic bytes, CSV otherwise.
DenseMatrix read_features(const std::filesystem::path& path);
void write_csv_matrix(const DenseMatrix& m, const std::filesystem::path& path);
/// Writes then reads back a MAGF file.
DenseMatrix feature_file_roundtrip(const DenseMatrix& m, const std::filesystem::path& path);

struct EdgeListStats {
  std::size_t lines = 0;
  std::size_t self_loops_dropped = 0;
  std::size_t duplicates_dropped = 0;
};

std::vector<Edge> read_edge_list(const std::filesystem::path& path, std::size_t num_nodes,
                                 EdgeListStats* stats = nullptr);
void write_edge_list(const std::vector<Edge>& edges, const std::filesystem::path& path);
std::vector<int> read_categories(const std::filesystem::path& path, std::size_t num_nodes);

/// Sorts, drops self-loops, and removes duplicate undirected pairs.
std::vector<Edge> canonical_edges(const std::vector<std::pair<std::size_t, std::size_t>>& raw,
                                  EdgeListStats* stats = nullptr);

struct DatasetPaths {
  std::filesystem::path features_v;
  std::filesystem::path features_t;
  std::filesystem::path edges;
  std::optional<std::filesystem::path> categories;
};

struct LoadReport {
  EdgeListStats edges;
};

MagDataset load_dataset(const DatasetPaths& paths, const SplitConfig& split,
                        LoadReport* report = nullptr);

}  // namespace magr
