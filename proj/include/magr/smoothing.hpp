#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "magr/tensor.hpp"
#include "magr/topology.hpp"

namespace magr {

struct SmoothingConfig {
  std::size_t depth = 4;
  double beta = 0.5;
  double alpha = 0.1;
  bool normalize_each_step = true;

  void validate() const;
};

/// States H^(0..K) per modality. H^(0) is the input embedding unchanged.
/// norms_* hold the pre-normalization row norms of steps 1..K (empty when
/// normalization is off) and are what the reverse pass needs.
struct SmoothingTrajectory {
  std::vector<DenseMatrix> v;
  std::vector<DenseMatrix> t;
  std::vector<std::vector<double>> norms_v;
  std::vector<std::vector<double>> norms_t;

  std::size_t depth() const { return v.empty() ? 0 : v.size() - 1; }
  const std::vector<DenseMatrix>& states(Modality m) const {
    return m == Modality::Visual ? v : t;
  }
};

/// K steps of
///   A_v = (1-beta) P_v H_v + beta P_vt H_t,  A_t = (1-beta) P_t H_t + beta P_tv H_v,
///   H_m = Norm((1-alpha) A_m + alpha E_m)   (Norm skipped when normalization is off).
SmoothingTrajectory coupled_smooth(const PropagationOperators& ops, const DenseMatrix& emb_v,
                                   const DenseMatrix& emb_t, const SmoothingConfig& cfg);

struct SmoothingGrads {
  DenseMatrix emb_v;
  DenseMatrix emb_t;
  /// dL/dP per stored operator entry, aligned with each operator's values().
  std::array<std::vector<double>, kNumChannels> weights;
};

/// Reverse pass of coupled_smooth given dL/dH^(k) for every k = 0..K.
SmoothingGrads coupled_smooth_backward(const PropagationOperators& ops,
                                       const SmoothingTrajectory& traj,
                                       const SmoothingConfig& cfg,
                                       std::vector<DenseMatrix> grad_v,
                                       std::vector<DenseMatrix> grad_t);

/// 2N x 2N block operator [[(1-b) P_v, b P_vt], [b P_tv, (1-b) P_t]]; blocks
/// with a zero coefficient are omitted from the pattern.
SparseRowMatrix joint_operator(const PropagationOperators& ops, double beta);

/// Stacks [E_v; E_t].
DenseMatrix stack_modalities(const DenseMatrix& emb_v, const DenseMatrix& emb_t);

inline constexpr std::size_t kMaxDenseNodes = 512;

/// alpha (I - (1-alpha) M)^{-1} E by dense LU. M is the joint operator, so its
/// dimension is 2N; N above kMaxDenseNodes is rejected.
DenseMatrix resolvent_fixed_point(const SparseRowMatrix& joint, double alpha,
                                  const DenseMatrix& joint_emb);
DenseMatrix resolvent_fixed_point(const PropagationOperators& ops, double beta, double alpha,
                                  const DenseMatrix& joint_emb);

/// One unnormalized restart step (1-alpha) M H + alpha E.
DenseMatrix restart_step(const SparseRowMatrix& joint, double alpha, const DenseMatrix& joint_emb,
                         const DenseMatrix& state);

struct RestartConvergence {
  /// Infinity-norm distance to the fixed point at steps 0..steps.
  std::vector<double> residuals;
  /// exp(slope) of a least-squares fit of log residual against step,
  /// over the steps where the residual is above roundoff; 0 when the
  /// iteration reaches the fixed point within one step.
  double fitted_rate = 0.0;
};

RestartConvergence restart_convergence(const SparseRowMatrix& joint, double alpha,
                                       const DenseMatrix& joint_emb, const DenseMatrix& start,
                                       const DenseMatrix& fixed_point, std::size_t steps);

/// Frobenius norm of H_v^(k) - H_t^(k).
double gap_norm(const SmoothingTrajectory& traj, std::size_t step);

/// Mean over columns of the across-row variance of M^k E for k = 0..steps.
std::vector<double> collapse_monitor(const SparseRowMatrix& joint, const DenseMatrix& joint_emb,
                                     std::size_t steps);

double mean_column_variance(const DenseMatrix& m);

}  // namespace magr
