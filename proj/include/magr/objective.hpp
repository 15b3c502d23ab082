#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "magr/dataset.hpp"
#include "magr/readout.hpp"
#include "magr/rng.hpp"
#include "magr/smoothing.hpp"
#include "magr/tensor.hpp"
#include "magr/topology.hpp"

namespace magr {

struct LossWeights {
  double cde = 0.1;
  double topo = 0.05;
  double direct = 0.3;
  /// Cross-channel CDE scale: lambda_vt = lambda_tv = gamma / 2.
  double gamma = 1.0;
  double temperature = 0.07;
  std::size_t negatives = 5;
  /// Candidate edges drawn per channel and step as topology positives.
  std::size_t topo_positives = 1024;

  void validate() const;
};

/// e = Norm(x W^T + b).
struct Adapter {
  DenseMatrix weight;  // d x F
  DenseMatrix bias;    // 1 x d
};

enum class ParamGroup { Adapter, Scorer, Readout };
const char* to_string(ParamGroup g);

struct ModelParams {
  std::array<Adapter, 2> adapters;  // indexed by Modality
  EdgeScorerParams scorers;
  ReadoutParams readouts;

  struct Slot {
    std::string name;
    ParamGroup group;
    DenseMatrix* tensor;
  };
  struct ConstSlot {
    std::string name;
    ParamGroup group;
    const DenseMatrix* tensor;
  };

  /// Every parameter tensor in a fixed order: adapters, scorers by channel,
  /// readout heads by modality.
  std::vector<Slot> slots();
  std::vector<ConstSlot> slots() const;

  ModelParams zeros_like() const;
  std::size_t size() const;
  bool same_shape(const ModelParams& other) const;
  bool all_finite() const;
  void fill(double value);

  friend bool operator==(const ModelParams& a, const ModelParams& b);
};

struct ModelConfig {
  std::size_t dim = 64;
  std::size_t scorer_hidden = 32;
  SmoothingConfig smoothing;
  ReadoutConfig readout;
  /// false freezes the operators at uniform weights over each candidate row.
  bool learn_topology = true;
  /// Linear baseline: Z = E, no propagation.
  bool adapter_only = false;

  void validate() const;
};

/// Adapters start at the identity when F == d and at N(0, 1/F) otherwise;
/// scorer and readout weights are N(0, 1/fan_in) with zero biases.
ModelParams init_params(const ModelConfig& cfg, std::size_t feat_v, std::size_t feat_t,
                        SeededRng& rng);

/// Adapted embeddings E_m = Norm(X_m W_m^T + b_m).
struct AdaptedEmbeddings {
  DenseMatrix v;
  DenseMatrix t;
  std::vector<double> norms_v;
  std::vector<double> norms_t;
};

AdaptedEmbeddings adapt(const ModelParams& params, const MagDataset& ds);

/// Everything the reverse pass needs from one forward evaluation.
struct ForwardState {
  AdaptedEmbeddings emb;
  ChannelLogits logits;
  PropagationOperators ops;
  SmoothingTrajectory traj;
  ReadoutResult readout;

  /// Refined embeddings Z (or E for the adapter-only model).
  const DenseMatrix& z_v() const { return readout.z_v.empty() ? emb.v : readout.z_v; }
  const DenseMatrix& z_t() const { return readout.z_t.empty() ? emb.t : readout.z_t; }
};

ForwardState forward(const ModelParams& params, const MagDataset& ds,
                     const CandidateGraphs& graphs, const ModelConfig& cfg);

struct InfoNceResult {
  double loss = 0.0;
  DenseMatrix grad_v;
  DenseMatrix grad_t;
};

/// 0.5 * (mean_b CE_v->t + mean_b CE_t->v) with logits z_v . z_t / tau over the gallery.
InfoNceResult info_nce_symmetric(const DenseMatrix& z_v, const DenseMatrix& z_t,
                                 std::span<const std::size_t> batch,
                                 std::span<const std::size_t> gallery, double tau);

struct CdeResult {
  double loss = 0.0;
  DenseMatrix grad_v;
  DenseMatrix grad_t;
  /// dL/dP per stored operator entry.
  std::array<std::vector<double>, kNumChannels> grad_weights;
};

/// sum_c lambda_c sum_(i,j) P_c(i,j) |e_i^target(c) - e_j^source(c)|^2.
CdeResult cde_loss(const PropagationOperators& ops, const DenseMatrix& emb_v,
                   const DenseMatrix& emb_t, double gamma);

/// Reverse pass of the per-row softmax: dL/dlogit from dL/dP.
std::vector<double> operator_softmax_backward(const SparseRowMatrix& op,
                                              std::span<const double> grad_weights);

/// Positive candidate edges and sampled non-edges for one step, per channel.
struct TopoSample {
  struct Pairs {
    std::vector<std::size_t> targets;
    std::vector<std::size_t> sources;
  };
  std::array<Pairs, kNumChannels> positives;
  std::array<Pairs, kNumChannels> negatives;
};

/// Draws up to `positive_cap` candidate edges per channel and `negatives`
/// uniform non-edges of the same channel per positive (rejection sampling).
/// A channel without non-edges is skipped with a warning.
TopoSample sample_topology(const CandidateGraphs& graphs, std::size_t negatives,
                           std::size_t positive_cap, SeededRng& rng);

struct TopoResult {
  double loss = 0.0;
  EdgeScorerParams grad_scorers;
  DenseMatrix grad_v;
  DenseMatrix grad_t;
};

/// Logistic binary NCE averaged over positives and summed over channels.
TopoResult topology_contrast(const TopoSample& sample, const EdgeScorerParams& scorers,
                             const DenseMatrix& emb_v, const DenseMatrix& emb_t);

/// Loss value for given per-pair logits of one channel.
double topology_contrast_value(std::span<const double> pos_logits,
                               std::span<const double> neg_logits);

enum class Objective {
  /// L_align + lambda_direct L_lin + lambda_cde CDE / N + lambda_topo Topo.
  Full,
  /// L_lin alone at weight 1 (warm-up and the adapter-only baseline).
  LinearOnly,
};

struct StepInput {
  std::span<const std::size_t> batch;
  std::span<const std::size_t> gallery;
  const TopoSample* topo = nullptr;  // required when lambda_topo > 0
  Objective objective = Objective::Full;
};

struct LossBreakdown {
  double total = 0.0;
  double align = 0.0;
  double direct = 0.0;
  double cde = 0.0;  // edge sum; the total weighs it by lambda_cde / N
  double topo = 0.0;
};

/// Loss of one step and its exact gradient. `grads` must shape-match `params`
/// and is overwritten. Throws ErrorKind::Numeric naming the first non-finite term.
LossBreakdown total_loss_and_grad(const ModelParams& params, const MagDataset& ds,
                                  const CandidateGraphs& graphs, const ModelConfig& cfg,
                                  const LossWeights& weights, const StepInput& step,
                                  ModelParams& grads);

/// Same loss without gradients.
LossBreakdown total_loss(const ModelParams& params, const MagDataset& ds,
                         const CandidateGraphs& graphs, const ModelConfig& cfg,
                         const LossWeights& weights, const StepInput& step);

struct GradCheckEntry {
  std::string name;
  double analytic_norm = 0.0;
  double numeric_norm = 0.0;
  /// |a - n| / (|a| + |n|), 0 when both vanish.
  double rel_error = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double max_rel_error = 0.0;
};

/// Central differences of `loss` against `analytic`, one entry per parameter tensor.
GradCheckReport check_gradients(const ModelParams& params, const ModelParams& analytic,
                                const std::function<double(const ModelParams&)>& loss,
                                double step = 1e-5);

}  // namespace magr
