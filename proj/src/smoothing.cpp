#include "magr/smoothing.hpp"

#include <cmath>
#include <string>

#include "magr/error.hpp"
#include "magr/kernels.hpp"

namespace magr {

void SmoothingConfig::validate() const {
  if (!(beta >= 0.0 && beta <= 1.0)) throw Error(ErrorKind::Config, "beta must lie in [0,1]");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw Error(ErrorKind::Config, "alpha must lie in [0,1]");
}

namespace {

void check_shapes(const PropagationOperators& ops, const DenseMatrix& emb_v,
                  const DenseMatrix& emb_t) {
  const std::size_t n = emb_v.rows();
  if (emb_t.rows() != n || emb_v.cols() != emb_t.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "smoothing: embeddings differ in shape");
  }
  for (Channel c : kChannels) {
    if (ops[c].rows() != n || ops[c].cols() != n) {
      throw Error(ErrorKind::DimensionMismatch,
                  std::string("smoothing: operator ") + to_string(c) + " is not N x N");
    }
  }
}

// (1-b) * intra * own + b * cross * other
DenseMatrix mix(const SparseRowMatrix& intra, const DenseMatrix& own,
                const SparseRowMatrix& cross, const DenseMatrix& other, double beta) {
  DenseMatrix out(own.rows(), own.cols());
  if (beta != 1.0) spmm_accumulate(intra, own, 1.0 - beta, out);
  if (beta != 0.0) spmm_accumulate(cross, other, beta, out);
  return out;
}

// dL/dP(i,j) += scale * g[i] . h[j] over the stored pattern.
void accumulate_weight_grad(const SparseRowMatrix& op, const DenseMatrix& g,
                            const DenseMatrix& h, double scale, std::vector<double>& out) {
  if (scale == 0.0) return;
  const auto n = static_cast<std::ptrdiff_t>(op.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t rr = 0; rr < n; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const auto gr = g.row(r);
    for (std::size_t e = op.row_begin(r); e < op.row_end(r); ++e) {
      out[e] += scale * dot(gr, h.row(op.indices()[e]));
    }
  }
}

}  // namespace

SmoothingTrajectory coupled_smooth(const PropagationOperators& ops, const DenseMatrix& emb_v,
                                   const DenseMatrix& emb_t, const SmoothingConfig& cfg) {
  cfg.validate();
  check_shapes(ops, emb_v, emb_t);
  const double a = cfg.alpha, b = cfg.beta;
  SmoothingTrajectory traj;
  traj.v.reserve(cfg.depth + 1);
  traj.t.reserve(cfg.depth + 1);
  traj.v.push_back(emb_v);
  traj.t.push_back(emb_t);
  for (std::size_t k = 1; k <= cfg.depth; ++k) {
    const DenseMatrix& hv = traj.v.back();
    const DenseMatrix& ht = traj.t.back();
    DenseMatrix nv = mix(ops[Channel::V], hv, ops[Channel::VT], ht, b);
    DenseMatrix nt = mix(ops[Channel::T], ht, ops[Channel::TV], hv, b);
    for (std::size_t i = 0; i < nv.size(); ++i) {
      nv.data()[i] = (1.0 - a) * nv.data()[i] + a * emb_v.data()[i];
      nt.data()[i] = (1.0 - a) * nt.data()[i] + a * emb_t.data()[i];
    }
    if (cfg.normalize_each_step) {
      traj.norms_v.emplace_back();
      traj.norms_t.emplace_back();
      l2_normalize_rows_inplace(nv, traj.norms_v.back());
      l2_normalize_rows_inplace(nt, traj.norms_t.back());
    }
    traj.v.push_back(std::move(nv));
    traj.t.push_back(std::move(nt));
  }
  return traj;
}

SmoothingGrads coupled_smooth_backward(const PropagationOperators& ops,
                                       const SmoothingTrajectory& traj,
                                       const SmoothingConfig& cfg,
                                       std::vector<DenseMatrix> grad_v,
                                       std::vector<DenseMatrix> grad_t) {
  const std::size_t depth = traj.depth();
  if (grad_v.size() != depth + 1 || grad_t.size() != depth + 1) {
    throw Error(ErrorKind::DimensionMismatch, "smoothing backward: one gradient per state");
  }
  const double a = cfg.alpha, b = cfg.beta;
  SmoothingGrads out;
  out.emb_v = DenseMatrix(traj.v[0].rows(), traj.v[0].cols());
  out.emb_t = out.emb_v;
  for (Channel c : kChannels) out.weights[idx(c)].assign(ops[c].nnz(), 0.0);

  const SparseRowMatrix pv_t = transpose(ops[Channel::V]);
  const SparseRowMatrix pt_t = transpose(ops[Channel::T]);
  const SparseRowMatrix pvt_t = transpose(ops[Channel::VT]);
  const SparseRowMatrix ptv_t = transpose(ops[Channel::TV]);

  for (std::size_t k = depth; k >= 1; --k) {
    DenseMatrix gbv = cfg.normalize_each_step
                          ? l2_normalize_rows_backward(grad_v[k], traj.v[k], traj.norms_v[k - 1])
                          : grad_v[k];
    DenseMatrix gbt = cfg.normalize_each_step
                          ? l2_normalize_rows_backward(grad_t[k], traj.t[k], traj.norms_t[k - 1])
                          : grad_t[k];
    if (a != 0.0) {
      for (std::size_t i = 0; i < gbv.size(); ++i) {
        out.emb_v.data()[i] += a * gbv.data()[i];
        out.emb_t.data()[i] += a * gbt.data()[i];
      }
    }
    // gradients w.r.t. the pre-restart mixes A_v, A_t
    gbv *= 1.0 - a;
    gbt *= 1.0 - a;
    const DenseMatrix& hv = traj.v[k - 1];
    const DenseMatrix& ht = traj.t[k - 1];
    accumulate_weight_grad(ops[Channel::V], gbv, hv, 1.0 - b, out.weights[idx(Channel::V)]);
    accumulate_weight_grad(ops[Channel::VT], gbv, ht, b, out.weights[idx(Channel::VT)]);
    accumulate_weight_grad(ops[Channel::T], gbt, ht, 1.0 - b, out.weights[idx(Channel::T)]);
    accumulate_weight_grad(ops[Channel::TV], gbt, hv, b, out.weights[idx(Channel::TV)]);
    if (b != 1.0) {
      spmm_accumulate(pv_t, gbv, 1.0 - b, grad_v[k - 1]);
      spmm_accumulate(pt_t, gbt, 1.0 - b, grad_t[k - 1]);
    }
    if (b != 0.0) {
      spmm_accumulate(ptv_t, gbt, b, grad_v[k - 1]);
      spmm_accumulate(pvt_t, gbv, b, grad_t[k - 1]);
    }
  }
  out.emb_v += grad_v[0];
  out.emb_t += grad_t[0];
  return out;
}

SparseRowMatrix joint_operator(const PropagationOperators& ops, double beta) {
  const std::size_t n = ops.num_nodes();
  std::vector<std::size_t> offsets{0}, indices;
  std::vector<double> values;
  auto append_row = [&](const SparseRowMatrix& op, std::size_t r, double scale, std::size_t shift) {
    if (scale == 0.0) return;
    for (std::size_t e = op.row_begin(r); e < op.row_end(r); ++e) {
      indices.push_back(op.indices()[e] + shift);
      values.push_back(scale * op.values()[e]);
    }
  };
  for (std::size_t i = 0; i < n; ++i) {
    append_row(ops[Channel::V], i, 1.0 - beta, 0);
    append_row(ops[Channel::VT], i, beta, n);
    offsets.push_back(indices.size());
  }
  for (std::size_t i = 0; i < n; ++i) {
    append_row(ops[Channel::TV], i, beta, 0);
    append_row(ops[Channel::T], i, 1.0 - beta, n);
    offsets.push_back(indices.size());
  }
  return {2 * n, 2 * n, std::move(offsets), std::move(indices), std::move(values), false};
}

DenseMatrix stack_modalities(const DenseMatrix& emb_v, const DenseMatrix& emb_t) {
  if (emb_v.cols() != emb_t.cols()) throw Error(ErrorKind::DimensionMismatch, "stack widths");
  std::vector<double> data(emb_v.data());
  data.insert(data.end(), emb_t.data().begin(), emb_t.data().end());
  return DenseMatrix(emb_v.rows() + emb_t.rows(), emb_v.cols(), std::move(data));
}

DenseMatrix resolvent_fixed_point(const SparseRowMatrix& joint, double alpha,
                                  const DenseMatrix& joint_emb) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "resolvent needs alpha in (0,1]");
  }
  if (joint.rows() > 2 * kMaxDenseNodes) {
    throw Error(ErrorKind::InvalidArgument,
                "resolvent: " + std::to_string(joint.rows() / 2) + " nodes exceeds the dense-solve "
                "limit of " + std::to_string(kMaxDenseNodes) + "; use the iterative restart mode");
  }
  if (joint.cols() != joint.rows() || joint_emb.rows() != joint.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "resolvent shapes");
  }
  DenseMatrix system = joint.to_dense();
  system *= -(1.0 - alpha);
  for (std::size_t i = 0; i < system.rows(); ++i) system(i, i) += 1.0;
  return dense_solve(system, alpha * joint_emb);
}

DenseMatrix resolvent_fixed_point(const PropagationOperators& ops, double beta, double alpha,
                                  const DenseMatrix& joint_emb) {
  return resolvent_fixed_point(joint_operator(ops, beta), alpha, joint_emb);
}

DenseMatrix restart_step(const SparseRowMatrix& joint, double alpha, const DenseMatrix& joint_emb,
                         const DenseMatrix& state) {
  DenseMatrix next = alpha * joint_emb;
  spmm_accumulate(joint, state, 1.0 - alpha, next);
  return next;
}

RestartConvergence restart_convergence(const SparseRowMatrix& joint, double alpha,
                                       const DenseMatrix& joint_emb, const DenseMatrix& start,
                                       const DenseMatrix& fixed_point, std::size_t steps) {
  RestartConvergence out;
  DenseMatrix state = start;
  out.residuals.push_back(inf_norm(state - fixed_point));
  for (std::size_t k = 1; k <= steps; ++k) {
    state = restart_step(joint, alpha, joint_emb, state);
    out.residuals.push_back(inf_norm(state - fixed_point));
  }
  // Fit only above the roundoff floor.
  const double floor = 1e-11 * std::max(out.residuals.front(), 1e-300);
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t count = 0;
  for (std::size_t k = 0; k < out.residuals.size(); ++k) {
    const double r = out.residuals[k];
    if (!(r > floor)) break;
    const double x = static_cast<double>(k), y = std::log(r);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++count;
  }
  if (count >= 2) {
    const double c = static_cast<double>(count);
    const double slope = (c * sxy - sx * sy) / (c * sxx - sx * sx);
    out.fitted_rate = std::exp(slope);
  }
  return out;
}

double gap_norm(const SmoothingTrajectory& traj, std::size_t step) {
  if (step > traj.depth()) {
    throw Error(ErrorKind::InvalidArgument, "gap_norm: step " + std::to_string(step) +
                                                " beyond depth " + std::to_string(traj.depth()));
  }
  return frobenius_norm(traj.v[step] - traj.t[step]);
}

double mean_column_variance(const DenseMatrix& m) {
  if (m.rows() == 0 || m.cols() == 0) return 0.0;
  const auto rows = static_cast<double>(m.rows());
  double total = 0.0;
  for (std::size_t c = 0; c < m.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) mean += m(r, c);
    mean /= rows;
    double var = 0.0;
    for (std::size_t r = 0; r < m.rows(); ++r) var += (m(r, c) - mean) * (m(r, c) - mean);
    total += var / rows;
  }
  return total / static_cast<double>(m.cols());
}

std::vector<double> collapse_monitor(const SparseRowMatrix& joint, const DenseMatrix& joint_emb,
                                     std::size_t steps) {
  std::vector<double> series;
  series.reserve(steps + 1);
  DenseMatrix state = joint_emb;
  series.push_back(mean_column_variance(state));
  for (std::size_t k = 1; k <= steps; ++k) {
    state = spmm(joint, state);
    series.push_back(mean_column_variance(state));
  }
  return series;
}

}  // namespace magr
