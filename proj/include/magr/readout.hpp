#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <vector>

#include "magr/smoothing.hpp"
#include "magr/tensor.hpp"

namespace magr {

/// Trajectory attention for one modality:
/// u^(k) = q . tanh(W_att h^(k) + U_att hbar),  hbar = mean_k h^(k).
/// W_att and U_att are independent of the adapter weights.
struct ReadoutHead {
  DenseMatrix w_att;  // d_a x d
  DenseMatrix u_att;  // d_a x d
  DenseMatrix q;      // 1 x d_a

  std::size_t width() const { return w_att.rows(); }
  static ReadoutHead zeros(std::size_t width, std::size_t dim);
};

using ReadoutParams = std::array<ReadoutHead, 2>;  // indexed by Modality

struct ReadoutConfig {
  double rho = 0.7;
  std::size_t width = 16;
  /// false replaces the attention with uniform weights 1/(K+1).
  bool adaptive = true;

  void validate() const;
};

/// Softmax-over-depth weights, N x (K+1).
DenseMatrix attention_weights(const std::vector<DenseMatrix>& states, const ReadoutHead& head);

struct ReadoutResult {
  DenseMatrix z_v;
  DenseMatrix z_t;
  DenseMatrix weights_v;
  DenseMatrix weights_t;
  std::vector<double> norms_v;  // pre-normalization row norms
  std::vector<double> norms_t;
};

/// Z_m = Norm(rho * sum_k w^(k) h^(k) + (1 - rho) e).
ReadoutResult trajectory_readout(const SmoothingTrajectory& traj, const DenseMatrix& emb_v,
                                 const DenseMatrix& emb_t, const ReadoutParams& params,
                                 const ReadoutConfig& cfg);

struct ReadoutGrads {
  std::vector<DenseMatrix> states_v;  // dL/dH_v^(k), k = 0..K
  std::vector<DenseMatrix> states_t;
  DenseMatrix emb_v;
  DenseMatrix emb_t;
  ReadoutParams params;
};

ReadoutGrads trajectory_readout_backward(const SmoothingTrajectory& traj,
                                         const DenseMatrix& emb_v, const DenseMatrix& emb_t,
                                         const ReadoutParams& params, const ReadoutConfig& cfg,
                                         const ReadoutResult& fwd, const DenseMatrix& grad_z_v,
                                         const DenseMatrix& grad_z_t);

/// Per-node depth with the largest attention weight (first on ties).
std::vector<std::size_t> selected_depths(const DenseMatrix& weights);
/// CSV "node,depth_v,depth_t".
void write_selected_depths(const ReadoutResult& r, const std::filesystem::path& path);

}  // namespace magr
