#include "magr/readout.hpp"

#include <cmath>
#include <fstream>

#include "magr/error.hpp"
#include "magr/kernels.hpp"

namespace magr {

ReadoutHead ReadoutHead::zeros(std::size_t width, std::size_t dim) {
  return {DenseMatrix(width, dim), DenseMatrix(width, dim), DenseMatrix(1, width)};
}

void ReadoutConfig::validate() const {
  if (!(rho >= 0.0 && rho <= 1.0)) throw Error(ErrorKind::Config, "rho must lie in [0,1]");
  if (width == 0) throw Error(ErrorKind::Config, "attention width must be >= 1");
}

namespace {

DenseMatrix trajectory_mean(const std::vector<DenseMatrix>& states) {
  DenseMatrix mean(states[0].rows(), states[0].cols());
  for (const auto& h : states) mean += h;
  mean *= 1.0 / static_cast<double>(states.size());
  return mean;
}

// tanh(W h^(k) + U hbar) for every k.
std::vector<DenseMatrix> attention_activations(const std::vector<DenseMatrix>& states,
                                               const DenseMatrix& mean, const ReadoutHead& head) {
  if (head.w_att.cols() != states[0].cols() || head.u_att.cols() != states[0].cols() ||
      head.u_att.rows() != head.width() || head.q.cols() != head.width()) {
    throw Error(ErrorKind::DimensionMismatch, "readout head does not match state width");
  }
  const DenseMatrix context = matmul_nt(mean, head.u_att);
  std::vector<DenseMatrix> acts;
  acts.reserve(states.size());
  for (const auto& h : states) {
    DenseMatrix s = matmul_nt(h, head.w_att);
    s += context;
    for (double& x : s.data()) x = std::tanh(x);
    acts.push_back(std::move(s));
  }
  return acts;
}

DenseMatrix depth_softmax(const std::vector<DenseMatrix>& acts, const ReadoutHead& head) {
  const std::size_t n = acts[0].rows(), depths = acts.size();
  DenseMatrix w(n, depths);
  for (std::size_t i = 0; i < n; ++i) {
    auto row = w.row(i);
    for (std::size_t k = 0; k < depths; ++k) row[k] = dot(acts[k].row(i), head.q.row(0));
    softmax_inplace(row);
  }
  return w;
}

void check_states(const std::vector<DenseMatrix>& states, const DenseMatrix& emb) {
  if (states.empty()) throw Error(ErrorKind::InvalidArgument, "readout: empty trajectory");
  for (const auto& h : states) {
    if (!h.same_shape(emb)) throw Error(ErrorKind::DimensionMismatch, "readout: state shape");
  }
}

struct HeadOutput {
  DenseMatrix z;
  DenseMatrix weights;
  std::vector<double> norms;
};

HeadOutput read_one(const std::vector<DenseMatrix>& states, const DenseMatrix& emb,
                    const ReadoutHead& head, const ReadoutConfig& cfg) {
  check_states(states, emb);
  HeadOutput out;
  if (cfg.adaptive) {
    out.weights = depth_softmax(attention_activations(states, trajectory_mean(states), head), head);
  } else {
    out.weights = DenseMatrix(emb.rows(), states.size(), 1.0 / static_cast<double>(states.size()));
  }
  out.z = DenseMatrix(emb.rows(), emb.cols());
  for (std::size_t i = 0; i < emb.rows(); ++i) {
    auto zr = out.z.row(i);
    for (std::size_t k = 0; k < states.size(); ++k) {
      const double w = cfg.rho * out.weights(i, k);
      const auto hr = states[k].row(i);
      for (std::size_t c = 0; c < zr.size(); ++c) zr[c] += w * hr[c];
    }
    const auto er = emb.row(i);
    for (std::size_t c = 0; c < zr.size(); ++c) zr[c] += (1.0 - cfg.rho) * er[c];
  }
  l2_normalize_rows_inplace(out.z, out.norms);
  return out;
}

struct HeadGrads {
  std::vector<DenseMatrix> states;
  DenseMatrix emb;
  ReadoutHead head;
};

HeadGrads back_one(const std::vector<DenseMatrix>& states, const ReadoutHead& head,
                   const ReadoutConfig& cfg, const DenseMatrix& z, const DenseMatrix& weights,
                   const std::vector<double>& norms, const DenseMatrix& grad_z) {
  const std::size_t n = z.rows(), depths = states.size();
  HeadGrads g;
  g.head = ReadoutHead::zeros(head.width(), head.w_att.cols());
  const DenseMatrix gy = l2_normalize_rows_backward(grad_z, z, norms);
  g.emb = (1.0 - cfg.rho) * gy;
  g.states.assign(depths, DenseMatrix(n, z.cols()));
  DenseMatrix grad_w(n, depths);
  for (std::size_t i = 0; i < n; ++i) {
    const auto gyr = gy.row(i);
    for (std::size_t k = 0; k < depths; ++k) {
      grad_w(i, k) = cfg.rho * dot(gyr, states[k].row(i));
      const double w = cfg.rho * weights(i, k);
      auto gh = g.states[k].row(i);
      for (std::size_t c = 0; c < gh.size(); ++c) gh[c] += w * gyr[c];
    }
  }
  if (!cfg.adaptive) return g;

  const DenseMatrix mean = trajectory_mean(states);
  const auto acts = attention_activations(states, mean, head);
  DenseMatrix grad_u(n, depths);
  for (std::size_t i = 0; i < n; ++i) {
    double avg = 0.0;
    for (std::size_t k = 0; k < depths; ++k) avg += weights(i, k) * grad_w(i, k);
    for (std::size_t k = 0; k < depths; ++k) grad_u(i, k) = weights(i, k) * (grad_w(i, k) - avg);
  }
  DenseMatrix gs_sum(n, head.width());
  for (std::size_t k = 0; k < depths; ++k) {
    DenseMatrix gs(n, head.width());
    for (std::size_t i = 0; i < n; ++i) {
      const double gu = grad_u(i, k);
      const auto t = acts[k].row(i);
      auto gsr = gs.row(i);
      for (std::size_t a = 0; a < gsr.size(); ++a) {
        g.head.q(0, a) += gu * t[a];
        gsr[a] = gu * head.q(0, a) * (1.0 - t[a] * t[a]);
      }
    }
    g.head.w_att += matmul_tn(gs, states[k]);
    g.states[k] += matmul(gs, head.w_att);
    gs_sum += gs;
  }
  g.head.u_att += matmul_tn(gs_sum, mean);
  DenseMatrix g_mean = matmul(gs_sum, head.u_att);
  g_mean *= 1.0 / static_cast<double>(depths);
  for (auto& gh : g.states) gh += g_mean;
  return g;
}

}  // namespace

DenseMatrix attention_weights(const std::vector<DenseMatrix>& states, const ReadoutHead& head) {
  if (states.empty()) throw Error(ErrorKind::InvalidArgument, "readout: empty trajectory");
  return depth_softmax(attention_activations(states, trajectory_mean(states), head), head);
}

ReadoutResult trajectory_readout(const SmoothingTrajectory& traj, const DenseMatrix& emb_v,
                                 const DenseMatrix& emb_t, const ReadoutParams& params,
                                 const ReadoutConfig& cfg) {
  cfg.validate();
  auto v = read_one(traj.v, emb_v, params[0], cfg);
  auto t = read_one(traj.t, emb_t, params[1], cfg);
  return {std::move(v.z),       std::move(t.z),     std::move(v.weights),
          std::move(t.weights), std::move(v.norms), std::move(t.norms)};
}

ReadoutGrads trajectory_readout_backward(const SmoothingTrajectory& traj,
                                         const DenseMatrix& emb_v, const DenseMatrix& emb_t,
                                         const ReadoutParams& params, const ReadoutConfig& cfg,
                                         const ReadoutResult& fwd, const DenseMatrix& grad_z_v,
                                         const DenseMatrix& grad_z_t) {
  check_states(traj.v, emb_v);
  check_states(traj.t, emb_t);
  auto gv = back_one(traj.v, params[0], cfg, fwd.z_v, fwd.weights_v, fwd.norms_v, grad_z_v);
  auto gt = back_one(traj.t, params[1], cfg, fwd.z_t, fwd.weights_t, fwd.norms_t, grad_z_t);
  ReadoutGrads out;
  out.states_v = std::move(gv.states);
  out.states_t = std::move(gt.states);
  out.emb_v = std::move(gv.emb);
  out.emb_t = std::move(gt.emb);
  out.params = {std::move(gv.head), std::move(gt.head)};
  return out;
}

std::vector<std::size_t> selected_depths(const DenseMatrix& weights) {
  std::vector<std::size_t> out(weights.rows());
  for (std::size_t i = 0; i < weights.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < weights.cols(); ++k) {
      if (weights(i, k) > weights(i, best)) best = k;
    }
    out[i] = best;
  }
  return out;
}

void write_selected_depths(const ReadoutResult& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  const auto dv = selected_depths(r.weights_v);
  const auto dt = selected_depths(r.weights_t);
  out << "node,depth_v,depth_t\n";
  for (std::size_t i = 0; i < dv.size(); ++i) out << i << ',' << dv[i] << ',' << dt[i] << '\n';
}

}  // namespace magr
