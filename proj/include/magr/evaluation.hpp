#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "magr/dataset.hpp"
#include "magr/tensor.hpp"

namespace magr {

/// R@K and MRR in percent; mean_rank >= 1.
struct DirectionMetrics {
  double r1 = 0.0;
  double r5 = 0.0;
  double r10 = 0.0;
  double mrr = 0.0;
  double mean_rank = 0.0;
};

struct RetrievalReport {
  DirectionMetrics v2t;
  DirectionMetrics t2v;
  DirectionMetrics avg;
  std::size_t num_queries = 0;
  std::size_t gallery_size = 0;
  std::string node_set;
};

/// Rank of each row's positive column: 1 + number of other columns scoring
/// at least as high (ties count against the query).
std::vector<std::size_t> paired_ranks(const DenseMatrix& scores,
                                      std::span<const std::size_t> positive_cols);
DirectionMetrics metrics_from_ranks(std::span<const std::size_t> ranks);
DirectionMetrics retrieval_from_scores(const DenseMatrix& scores,
                                       std::span<const std::size_t> positive_cols);

/// Paired-node retrieval in both directions by dot product. Every query must
/// also be in the gallery.
RetrievalReport retrieval_metrics(const DenseMatrix& z_v, const DenseMatrix& z_t,
                                  std::span<const std::size_t> queries,
                                  std::span<const std::size_t> gallery,
                                  std::string node_set = {});

struct OverlapReport {
  std::vector<double> per_node;
  double mean = 0.0;
  double median = 0.0;
};

/// |kNN_v(i) & kNN_t(i)| / k with cosine kNN inside each modality.
OverlapReport knn_overlap(const DenseMatrix& features_v, const DenseMatrix& features_t,
                          std::size_t k);

enum class NeighborSource { Structural, KnnVisual, KnnTextual };
const char* to_string(NeighborSource s);

/// Mean over nodes with at least one neighbor of the same-category fraction.
double neighbor_purity(const MagDataset& ds, NeighborSource source, std::size_t k);

/// D^{-1}(A + I) over the structural edges, or D^{-1} A without self loops
/// (isolated rows then stay empty).
SparseRowMatrix structural_operator(const MagDataset& ds, bool self_loops);

struct DepthSweepEntry {
  std::size_t depth = 0;
  double mean_rank = 0.0;
  /// NaN when the dataset has no categories.
  double separation = 0.0;
};

struct DepthSweepReport {
  std::vector<DepthSweepEntry> entries;

  const DepthSweepEntry& best() const;  // lowest mean rank, earliest on ties
};

/// Mean intra-category minus mean inter-category cosine over at most
/// `max_pairs` node pairs (all pairs when there are fewer).
double semantic_separation(const DenseMatrix& states, const std::vector<int>& categories,
                           std::size_t max_pairs, std::uint64_t seed);

/// Frozen features smoothed k steps per modality with D^{-1}(A + I) and no
/// restart; MeanR averages both directions with every node as query and gallery.
DepthSweepReport depth_sweep(const MagDataset& ds, std::span<const std::size_t> depths,
                             std::size_t max_pairs = 50000, std::uint64_t seed = 43);

struct HardQueryReport {
  std::size_t num_nodes = 0;
  std::size_t hard_supported = 0;
  double fraction = 0.0;
  double sim_threshold = 0.0;
  double support_threshold = 0.0;
};

/// Test nodes with self-pair cosine below the `low_q` quantile and structural
/// cross-modal support cos(x_v,i, (P x_t)_i) above the `high_q` quantile.
HardQueryReport hard_query_support(const MagDataset& ds, double low_q = 0.25,
                                   double high_q = 0.75);

/// Linear-interpolated quantile of unsorted values.
double quantile(std::vector<double> values, double q);

nlohmann::json to_json(const DirectionMetrics& m);
nlohmann::json to_json(const RetrievalReport& r);
nlohmann::json to_json(const DepthSweepReport& r);
nlohmann::json to_json(const HardQueryReport& r);

/// Plot-ready "depth,mean_rank,separation" CSV.
void write_depth_sweep_csv(const DepthSweepReport& r, const std::filesystem::path& path);

}  // namespace magr
