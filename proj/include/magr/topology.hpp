#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "magr/dataset.hpp"
#include "magr/tensor.hpp"

namespace magr {

enum class Modality { Visual = 0, Textual = 1 };

/// Propagation channels. Each channel's (i, j) entry lets the target state of
/// node i (in target_modality) receive the source state of node j.
enum class Channel { V = 0, T = 1, VT = 2, TV = 3 };
inline constexpr std::array<Channel, 4> kChannels = {Channel::V, Channel::T, Channel::VT,
                                                     Channel::TV};
inline constexpr std::size_t kNumChannels = 4;

const char* to_string(Channel c);
Modality target_modality(Channel c);
Modality source_modality(Channel c);
inline bool is_cross(Channel c) { return c == Channel::VT || c == Channel::TV; }
inline std::size_t idx(Channel c) { return static_cast<std::size_t>(c); }

enum class CandidateMode { Hybrid, StructureOnly };
const char* to_string(CandidateMode m);

enum class SelfPairPolicy { Exclude, Allow, Only };
const char* to_string(SelfPairPolicy p);

struct CandidateConfig {
  CandidateMode mode = CandidateMode::Hybrid;
  std::size_t k_intra = 10;
  std::size_t k_cross = 10;
  /// Control switch; in-protocol runs always exclude cross-modal self pairs.
  SelfPairPolicy self_pairs = SelfPairPolicy::Exclude;
};

/// Row-compressed edge pattern: sources of target row i are
/// indices[offsets[i] .. offsets[i+1]), sorted ascending and unique.
struct EdgePattern {
  std::size_t num_nodes = 0;
  std::vector<std::size_t> offsets{0};
  std::vector<std::size_t> indices;

  std::size_t nnz() const noexcept { return indices.size(); }
  std::size_t row_size(std::size_t r) const { return offsets[r + 1] - offsets[r]; }
  bool contains(std::size_t target, std::size_t source) const;
  /// Builds a pattern from per-row source lists (sorted and deduplicated here).
  static EdgePattern from_rows(std::vector<std::vector<std::size_t>> rows);
  /// Target node of every stored edge, in storage order.
  std::vector<std::size_t> targets() const;

  friend bool operator==(const EdgePattern&, const EdgePattern&) = default;
};

struct CandidateGraphs {
  std::array<EdgePattern, kNumChannels> channels;
  CandidateConfig config;

  const EdgePattern& operator[](Channel c) const { return channels[idx(c)]; }
  EdgePattern& operator[](Channel c) { return channels[idx(c)]; }
  std::size_t num_nodes() const { return channels[0].num_nodes; }
  std::size_t total_edges() const;
};

/// Candidate edge sets per channel. kNN uses cosine similarity with ties
/// broken by ascending node index; k is clamped to N - 1 with a warning.
/// Cross-modal kNN needs equal feature widths in the two inputs.
CandidateGraphs build_candidates(const MagDataset& ds, const DenseMatrix& feat_v,
                                 const DenseMatrix& feat_t, const CandidateConfig& cfg);

/// Single-layer edge scorer for one channel:
/// logit = a . tanh(W (x_target (*) x_source) + b).
struct EdgeScorer {
  DenseMatrix weight;  // h x d
  DenseMatrix bias;    // 1 x h
  DenseMatrix proj;    // 1 x h

  std::size_t hidden() const { return weight.rows(); }
  std::size_t dim() const { return weight.cols(); }
  static EdgeScorer zeros(std::size_t hidden, std::size_t dim);
};

using EdgeScorerParams = std::array<EdgeScorer, kNumChannels>;
using ChannelLogits = std::array<std::vector<double>, kNumChannels>;

/// Scores arbitrary (target, source) pairs of one channel.
std::vector<double> score_pairs(const EdgeScorer& scorer, const DenseMatrix& target_emb,
                                const DenseMatrix& source_emb,
                                std::span<const std::size_t> targets,
                                std::span<const std::size_t> sources);

/// One logit per candidate edge of every channel, in pattern storage order.
ChannelLogits score_edges(const CandidateGraphs& graphs, const DenseMatrix& emb_v,
                          const DenseMatrix& emb_t, const EdgeScorerParams& params);

/// Gradients of a sum over scored pairs, given dL/dlogit per pair.
void score_pairs_backward(const EdgeScorer& scorer, const DenseMatrix& target_emb,
                          const DenseMatrix& source_emb, std::span<const std::size_t> targets,
                          std::span<const std::size_t> sources,
                          std::span<const double> grad_logits, EdgeScorer& grad_scorer,
                          DenseMatrix& grad_target_emb, DenseMatrix& grad_source_emb);

struct PropagationOperators {
  std::array<SparseRowMatrix, kNumChannels> ops;

  const SparseRowMatrix& operator[](Channel c) const { return ops[idx(c)]; }
  SparseRowMatrix& operator[](Channel c) { return ops[idx(c)]; }
  std::size_t num_nodes() const { return ops[0].rows(); }
};

/// Row softmax of each channel's logits over its candidate rows. Empty
/// cross-modal rows stay explicit zero rows.
PropagationOperators normalize_operators(const CandidateGraphs& graphs,
                                         const ChannelLogits& logits);
/// Uniform weights over each candidate row (the "no topology learning" operators).
PropagationOperators uniform_operators(const CandidateGraphs& graphs);

/// Edge-list cache: one file per channel with a '#' header recording mode, k and seed.
void write_candidates(const CandidateGraphs& graphs, const std::filesystem::path& dir,
                      std::uint64_t seed);
CandidateGraphs read_candidates(const std::filesystem::path& dir, std::size_t num_nodes);

}  // namespace magr
