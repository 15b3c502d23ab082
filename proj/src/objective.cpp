#include "magr/objective.hpp"

#include <algorithm>
#include <cmath>

#include "magr/error.hpp"
#include "magr/kernels.hpp"
#include "magr/log.hpp"

namespace magr {

void LossWeights::validate() const {
  if (!(temperature > 0.0)) throw Error(ErrorKind::Config, "temperature must be positive");
  if (negatives < 1) throw Error(ErrorKind::Config, "negatives per positive must be >= 1");
  if (!(cde >= 0.0) || !(topo >= 0.0) || !(direct >= 0.0) || !(gamma >= 0.0)) {
    throw Error(ErrorKind::Config, "loss weights must be non-negative");
  }
  if (topo_positives < 1) throw Error(ErrorKind::Config, "topo_positives must be >= 1");
}

const char* to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::Adapter: return "adapter";
    case ParamGroup::Scorer: return "scorer";
    case ParamGroup::Readout: return "readout";
  }
  return "?";
}

namespace {

const char* modality_tag(std::size_t m) { return m == 0 ? "v" : "t"; }

template <typename Params, typename SlotT>
std::vector<SlotT> collect_slots(Params& p) {
  std::vector<SlotT> out;
  for (std::size_t m = 0; m < 2; ++m) {
    const std::string base = std::string("adapter_") + modality_tag(m);
    out.push_back({base + ".weight", ParamGroup::Adapter, &p.adapters[m].weight});
    out.push_back({base + ".bias", ParamGroup::Adapter, &p.adapters[m].bias});
  }
  for (Channel c : kChannels) {
    const std::string base = std::string("scorer_") + to_string(c);
    auto& s = p.scorers[idx(c)];
    out.push_back({base + ".weight", ParamGroup::Scorer, &s.weight});
    out.push_back({base + ".bias", ParamGroup::Scorer, &s.bias});
    out.push_back({base + ".proj", ParamGroup::Scorer, &s.proj});
  }
  for (std::size_t m = 0; m < 2; ++m) {
    const std::string base = std::string("readout_") + modality_tag(m);
    auto& r = p.readouts[m];
    out.push_back({base + ".w_att", ParamGroup::Readout, &r.w_att});
    out.push_back({base + ".u_att", ParamGroup::Readout, &r.u_att});
    out.push_back({base + ".q", ParamGroup::Readout, &r.q});
  }
  return out;
}

}  // namespace

std::vector<ModelParams::Slot> ModelParams::slots() {
  return collect_slots<ModelParams, Slot>(*this);
}

std::vector<ModelParams::ConstSlot> ModelParams::slots() const {
  return collect_slots<const ModelParams, ConstSlot>(*this);
}

ModelParams ModelParams::zeros_like() const {
  ModelParams out = *this;
  out.fill(0.0);
  return out;
}

std::size_t ModelParams::size() const {
  std::size_t n = 0;
  for (const auto& s : slots()) n += s.tensor->size();
  return n;
}

bool ModelParams::same_shape(const ModelParams& other) const {
  const auto a = slots();
  const auto b = other.slots();
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!a[i].tensor->same_shape(*b[i].tensor)) return false;
  }
  return true;
}

bool ModelParams::all_finite() const {
  for (const auto& s : slots()) {
    if (!s.tensor->all_finite()) return false;
  }
  return true;
}

void ModelParams::fill(double value) {
  for (auto& s : slots()) s.tensor->fill(value);
}

bool operator==(const ModelParams& a, const ModelParams& b) {
  const auto sa = a.slots();
  const auto sb = b.slots();
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (!(*sa[i].tensor == *sb[i].tensor)) return false;
  }
  return true;
}

void ModelConfig::validate() const {
  if (dim == 0) throw Error(ErrorKind::Config, "embedding dim must be >= 1");
  if (scorer_hidden == 0) throw Error(ErrorKind::Config, "scorer hidden width must be >= 1");
  smoothing.validate();
  readout.validate();
}

namespace {

DenseMatrix gaussian(std::size_t rows, std::size_t cols, double stddev, SeededRng& rng) {
  DenseMatrix m(rows, cols);
  for (double& x : m.data()) x = stddev * rng.normal();
  return m;
}

Adapter init_adapter(std::size_t dim, std::size_t feat, SeededRng& rng) {
  Adapter a;
  if (feat == dim) {
    a.weight = DenseMatrix::identity(dim);
  } else {
    a.weight = gaussian(dim, feat, 1.0 / std::sqrt(static_cast<double>(feat)), rng);
  }
  a.bias = DenseMatrix(1, dim);
  return a;
}

}  // namespace

ModelParams init_params(const ModelConfig& cfg, std::size_t feat_v, std::size_t feat_t,
                        SeededRng& rng) {
  cfg.validate();
  ModelParams p;
  const double sd = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  const double sh = 1.0 / std::sqrt(static_cast<double>(cfg.scorer_hidden));
  const double sa = 1.0 / std::sqrt(static_cast<double>(cfg.readout.width));
  p.adapters[0] = init_adapter(cfg.dim, feat_v, rng);
  p.adapters[1] = init_adapter(cfg.dim, feat_t, rng);
  for (auto& s : p.scorers) {
    s.weight = gaussian(cfg.scorer_hidden, cfg.dim, sd, rng);
    s.bias = DenseMatrix(1, cfg.scorer_hidden);
    s.proj = gaussian(1, cfg.scorer_hidden, sh, rng);
  }
  for (auto& r : p.readouts) {
    r.w_att = gaussian(cfg.readout.width, cfg.dim, sd, rng);
    r.u_att = gaussian(cfg.readout.width, cfg.dim, sd, rng);
    r.q = gaussian(1, cfg.readout.width, sa, rng);
  }
  return p;
}

namespace {

DenseMatrix adapter_forward(const Adapter& a, const DenseMatrix& x, std::vector<double>& norms) {
  if (a.weight.cols() != x.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "adapter input width does not match features");
  }
  DenseMatrix e = matmul_nt(x, a.weight);
  const auto b = a.bias.row(0);
  for (std::size_t i = 0; i < e.rows(); ++i) {
    auto r = e.row(i);
    for (std::size_t c = 0; c < r.size(); ++c) r[c] += b[c];
  }
  l2_normalize_rows_inplace(e, norms);
  return e;
}

void adapter_backward(const DenseMatrix& x, const DenseMatrix& e, const std::vector<double>& norms,
                      const DenseMatrix& grad_e, Adapter& grad) {
  const DenseMatrix gpre = l2_normalize_rows_backward(grad_e, e, norms);
  grad.weight += matmul_tn(gpre, x);
  auto gb = grad.bias.row(0);
  for (std::size_t i = 0; i < gpre.rows(); ++i) {
    const auto r = gpre.row(i);
    for (std::size_t c = 0; c < r.size(); ++c) gb[c] += r[c];
  }
}

void scatter_add(DenseMatrix& dst, std::span<const std::size_t> ids, const DenseMatrix& src) {
  for (std::size_t r = 0; r < ids.size(); ++r) {
    auto d = dst.row(ids[r]);
    const auto s = src.row(r);
    for (std::size_t c = 0; c < d.size(); ++c) d[c] += s[c];
  }
}

// One direction of the contrastive loss. Rows of `scores` are turned into
// (softmax - onehot) * scale in place; returns the summed cross-entropy.
double cross_entropy_rows(DenseMatrix& scores, std::span<const std::size_t> positives,
                          double scale) {
  double total = 0.0;
  for (std::size_t b = 0; b < scores.rows(); ++b) {
    auto r = scores.row(b);
    const double pos = r[positives[b]];
    const double mx = *std::max_element(r.begin(), r.end());
    double sum = 0.0;
    for (double v : r) sum += std::exp(v - mx);
    total += mx + std::log(sum) - pos;
    for (double& v : r) v = std::exp(v - mx) / sum * scale;
    r[positives[b]] -= scale;
  }
  return total;
}

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

const DenseMatrix& pick(Modality m, const DenseMatrix& v, const DenseMatrix& t) {
  return m == Modality::Visual ? v : t;
}
DenseMatrix& pick(Modality m, DenseMatrix& v, DenseMatrix& t) {
  return m == Modality::Visual ? v : t;
}

}  // namespace

AdaptedEmbeddings adapt(const ModelParams& params, const MagDataset& ds) {
  AdaptedEmbeddings out;
  out.v = adapter_forward(params.adapters[0], ds.features_v, out.norms_v);
  out.t = adapter_forward(params.adapters[1], ds.features_t, out.norms_t);
  return out;
}

ForwardState forward(const ModelParams& params, const MagDataset& ds,
                     const CandidateGraphs& graphs, const ModelConfig& cfg) {
  ForwardState fs;
  fs.emb = adapt(params, ds);
  if (cfg.adapter_only) return fs;
  if (graphs.num_nodes() != ds.num_nodes()) {
    throw Error(ErrorKind::DimensionMismatch, "candidate graphs do not match the dataset");
  }
  if (cfg.learn_topology) {
    fs.logits = score_edges(graphs, fs.emb.v, fs.emb.t, params.scorers);
  } else {
    for (Channel c : kChannels) fs.logits[idx(c)].assign(graphs[c].nnz(), 0.0);
  }
  fs.ops = normalize_operators(graphs, fs.logits);
  fs.traj = coupled_smooth(fs.ops, fs.emb.v, fs.emb.t, cfg.smoothing);
  fs.readout = trajectory_readout(fs.traj, fs.emb.v, fs.emb.t, params.readouts, cfg.readout);
  return fs;
}

InfoNceResult info_nce_symmetric(const DenseMatrix& z_v, const DenseMatrix& z_t,
                                 std::span<const std::size_t> batch,
                                 std::span<const std::size_t> gallery, double tau) {
  if (!z_v.same_shape(z_t)) throw Error(ErrorKind::DimensionMismatch, "info_nce: Z shapes");
  if (!(tau > 0.0)) throw Error(ErrorKind::InvalidArgument, "info_nce: tau must be positive");
  InfoNceResult out{0.0, DenseMatrix(z_v.rows(), z_v.cols()), DenseMatrix(z_t.rows(), z_t.cols())};
  if (batch.empty()) return out;

  std::vector<std::ptrdiff_t> slot(z_v.rows(), -1);
  for (std::size_t g = 0; g < gallery.size(); ++g) {
    if (gallery[g] >= z_v.rows()) throw Error(ErrorKind::InvalidArgument, "gallery id out of range");
    slot[gallery[g]] = static_cast<std::ptrdiff_t>(g);
  }
  std::vector<std::size_t> positives(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    if (batch[b] >= z_v.rows() || slot[batch[b]] < 0) {
      throw Error(ErrorKind::InvalidArgument,
                  "info_nce: batch node " + std::to_string(batch[b]) + " is not in the gallery");
    }
    positives[b] = static_cast<std::size_t>(slot[batch[b]]);
  }

  const DenseMatrix qv = z_v.gather_rows(batch), qt = z_t.gather_rows(batch);
  const DenseMatrix gv = z_v.gather_rows(gallery), gt = z_t.gather_rows(gallery);
  const double inv_tau = 1.0 / tau;
  const double scale = 0.5 / static_cast<double>(batch.size());

  DenseMatrix s_vt = inv_tau * matmul_nt(qv, gt);
  DenseMatrix s_tv = inv_tau * matmul_nt(qt, gv);
  const double l_vt = cross_entropy_rows(s_vt, positives, scale * inv_tau);
  const double l_tv = cross_entropy_rows(s_tv, positives, scale * inv_tau);
  out.loss = scale * (l_vt + l_tv);

  scatter_add(out.grad_v, batch, matmul(s_vt, gt));
  scatter_add(out.grad_t, gallery, matmul_tn(s_vt, qv));
  scatter_add(out.grad_t, batch, matmul(s_tv, gv));
  scatter_add(out.grad_v, gallery, matmul_tn(s_tv, qt));
  return out;
}

CdeResult cde_loss(const PropagationOperators& ops, const DenseMatrix& emb_v,
                   const DenseMatrix& emb_t, double gamma) {
  if (!emb_v.same_shape(emb_t)) throw Error(ErrorKind::DimensionMismatch, "cde: embedding shapes");
  CdeResult out;
  out.grad_v = DenseMatrix(emb_v.rows(), emb_v.cols());
  out.grad_t = out.grad_v;
  const std::size_t d = emb_v.cols();
  std::vector<double> diff(d);
  for (Channel c : kChannels) {
    const auto& op = ops[c];
    auto& gw = out.grad_weights[idx(c)];
    gw.assign(op.nnz(), 0.0);
    const double lambda = is_cross(c) ? 0.5 * gamma : 1.0;
    if (lambda == 0.0) continue;
    const DenseMatrix& tgt = pick(target_modality(c), emb_v, emb_t);
    const DenseMatrix& src = pick(source_modality(c), emb_v, emb_t);
    DenseMatrix& gtgt = pick(target_modality(c), out.grad_v, out.grad_t);
    DenseMatrix& gsrc = pick(source_modality(c), out.grad_v, out.grad_t);
    for (std::size_t i = 0; i < op.rows(); ++i) {
      const auto ti = tgt.row(i);
      for (std::size_t e = op.row_begin(i); e < op.row_end(i); ++e) {
        const std::size_t j = op.indices()[e];
        const auto sj = src.row(j);
        double sq = 0.0;
        for (std::size_t k = 0; k < d; ++k) {
          diff[k] = ti[k] - sj[k];
          sq += diff[k] * diff[k];
        }
        const double w = op.values()[e];
        out.loss += lambda * w * sq;
        gw[e] = lambda * sq;
        const double g = 2.0 * lambda * w;
        auto gt_row = gtgt.row(i);
        for (std::size_t k = 0; k < d; ++k) gt_row[k] += g * diff[k];
        auto gs_row = gsrc.row(j);
        for (std::size_t k = 0; k < d; ++k) gs_row[k] -= g * diff[k];
      }
    }
  }
  return out;
}

std::vector<double> operator_softmax_backward(const SparseRowMatrix& op,
                                              std::span<const double> grad_weights) {
  if (grad_weights.size() != op.nnz()) {
    throw Error(ErrorKind::DimensionMismatch, "softmax backward: gradient length");
  }
  std::vector<double> out(op.nnz());
  const auto n = static_cast<std::ptrdiff_t>(op.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t rr = 0; rr < n; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    double avg = 0.0;
    for (std::size_t e = op.row_begin(r); e < op.row_end(r); ++e) {
      avg += op.values()[e] * grad_weights[e];
    }
    for (std::size_t e = op.row_begin(r); e < op.row_end(r); ++e) {
      out[e] = op.values()[e] * (grad_weights[e] - avg);
    }
  }
  return out;
}

TopoSample sample_topology(const CandidateGraphs& graphs, std::size_t negatives,
                           std::size_t positive_cap, SeededRng& rng) {
  TopoSample out;
  const std::size_t n = graphs.num_nodes();
  for (Channel c : kChannels) {
    const auto& p = graphs[c];
    if (p.nnz() == 0) continue;
    if (p.nnz() >= n * n) {
      log::warn(std::string("topology contrast: channel ") + to_string(c) +
                " has no non-edges; skipped");
      continue;
    }
    const auto targets = p.targets();
    std::vector<std::size_t> picks(p.nnz());
    for (std::size_t e = 0; e < picks.size(); ++e) picks[e] = e;
    if (picks.size() > positive_cap) {
      for (std::size_t i = 0; i < positive_cap; ++i) {
        std::swap(picks[i], picks[i + rng.uniform_index(picks.size() - i)]);
      }
      picks.resize(positive_cap);
      std::sort(picks.begin(), picks.end());
    }
    auto& pos = out.positives[idx(c)];
    auto& neg = out.negatives[idx(c)];
    for (std::size_t e : picks) {
      pos.targets.push_back(targets[e]);
      pos.sources.push_back(p.indices[e]);
    }
    const std::size_t wanted = picks.size() * negatives;
    const std::size_t max_attempts = 1000 * wanted;
    std::size_t attempts = 0;
    while (neg.targets.size() < wanted && attempts < max_attempts) {
      ++attempts;
      const std::size_t i = rng.uniform_index(n);
      const std::size_t j = rng.uniform_index(n);
      if (p.contains(i, j)) continue;
      neg.targets.push_back(i);
      neg.sources.push_back(j);
    }
    if (neg.targets.size() < wanted) {
      log::warn(std::string("topology contrast: channel ") + to_string(c) + " drew only " +
                std::to_string(neg.targets.size()) + " of " + std::to_string(wanted) +
                " negatives");
    }
  }
  return out;
}

double topology_contrast_value(std::span<const double> pos_logits,
                               std::span<const double> neg_logits) {
  if (pos_logits.empty()) return 0.0;
  double sum = 0.0;
  for (double l : pos_logits) sum += softplus(-l);
  for (double l : neg_logits) sum += softplus(l);
  return sum / static_cast<double>(pos_logits.size());
}

TopoResult topology_contrast(const TopoSample& sample, const EdgeScorerParams& scorers,
                             const DenseMatrix& emb_v, const DenseMatrix& emb_t) {
  TopoResult out;
  out.grad_v = DenseMatrix(emb_v.rows(), emb_v.cols());
  out.grad_t = DenseMatrix(emb_t.rows(), emb_t.cols());
  for (Channel c : kChannels) {
    const auto& s = scorers[idx(c)];
    out.grad_scorers[idx(c)] = EdgeScorer::zeros(s.hidden(), s.dim());
    const auto& pos = sample.positives[idx(c)];
    const auto& neg = sample.negatives[idx(c)];
    if (pos.targets.empty()) continue;
    const DenseMatrix& tgt = pick(target_modality(c), emb_v, emb_t);
    const DenseMatrix& src = pick(source_modality(c), emb_v, emb_t);
    DenseMatrix& gtgt = pick(target_modality(c), out.grad_v, out.grad_t);
    DenseMatrix& gsrc = pick(source_modality(c), out.grad_v, out.grad_t);
    const auto lp = score_pairs(s, tgt, src, pos.targets, pos.sources);
    const auto ln = score_pairs(s, tgt, src, neg.targets, neg.sources);
    out.loss += topology_contrast_value(lp, ln);
    const double inv = 1.0 / static_cast<double>(lp.size());
    std::vector<double> gp(lp.size()), gn(ln.size());
    for (std::size_t e = 0; e < lp.size(); ++e) gp[e] = (sigmoid(lp[e]) - 1.0) * inv;
    for (std::size_t e = 0; e < ln.size(); ++e) gn[e] = sigmoid(ln[e]) * inv;
    auto& gs = out.grad_scorers[idx(c)];
    score_pairs_backward(s, tgt, src, pos.targets, pos.sources, gp, gs, gtgt, gsrc);
    score_pairs_backward(s, tgt, src, neg.targets, neg.sources, gn, gs, gtgt, gsrc);
  }
  return out;
}

namespace {

void check_finite(double value, const char* term) {
  if (!std::isfinite(value)) {
    throw Error(ErrorKind::Numeric, std::string("non-finite ") + term + " loss");
  }
}

void add_scaled(DenseMatrix& dst, double s, const DenseMatrix& src) {
  for (std::size_t i = 0; i < dst.size(); ++i) dst.data()[i] += s * src.data()[i];
}

LossBreakdown evaluate(const ModelParams& params, const MagDataset& ds,
                       const CandidateGraphs& graphs, const ModelConfig& cfg,
                       const LossWeights& weights, const StepInput& step, ModelParams* grads) {
  weights.validate();
  if (grads != nullptr) {
    if (!grads->same_shape(params)) {
      throw Error(ErrorKind::DimensionMismatch, "gradient buffers do not match parameters");
    }
    grads->fill(0.0);
  }
  const Objective objective = cfg.adapter_only ? Objective::LinearOnly : step.objective;
  ModelConfig fwd_cfg = cfg;
  fwd_cfg.adapter_only = objective == Objective::LinearOnly;
  const ForwardState fs = forward(params, ds, graphs, fwd_cfg);
  const double tau = weights.temperature;

  LossBreakdown lb;
  const auto lin = info_nce_symmetric(fs.emb.v, fs.emb.t, step.batch, step.gallery, tau);
  DenseMatrix ge_v(fs.emb.v.rows(), fs.emb.v.cols());
  DenseMatrix ge_t(fs.emb.t.rows(), fs.emb.t.cols());

  if (objective == Objective::LinearOnly) {
    lb.direct = lin.loss;
    check_finite(lb.direct, "linear-branch");
    lb.total = lb.direct;
    if (grads == nullptr) return lb;
    ge_v += lin.grad_v;
    ge_t += lin.grad_t;
  } else {
    const auto align = info_nce_symmetric(fs.readout.z_v, fs.readout.z_t, step.batch,
                                          step.gallery, tau);
    lb.align = align.loss;
    check_finite(lb.align, "alignment");
    lb.direct = lin.loss;
    check_finite(lb.direct, "linear-branch");

    CdeResult cde;
    // CDE is a sum over candidate edges; the objective uses its per-node mean
    // so the term stays on the scale of the batch-averaged losses.
    const double cde_scale = weights.cde / static_cast<double>(ds.num_nodes());
    if (weights.cde > 0.0) {
      cde = cde_loss(fs.ops, fs.emb.v, fs.emb.t, weights.gamma);
      lb.cde = cde.loss;
      check_finite(lb.cde, "CDE");
    }
    TopoResult topo;
    const bool use_topo = weights.topo > 0.0 && cfg.learn_topology;
    if (use_topo) {
      if (step.topo == nullptr) {
        throw Error(ErrorKind::InvalidArgument, "topology contrast needs a negative sample");
      }
      topo = topology_contrast(*step.topo, params.scorers, fs.emb.v, fs.emb.t);
      lb.topo = topo.loss;
      check_finite(lb.topo, "topology");
    }
    lb.total = lb.align + weights.direct * lb.direct + cde_scale * lb.cde +
               weights.topo * lb.topo;
    check_finite(lb.total, "total");
    if (grads == nullptr) return lb;

    const auto rb = trajectory_readout_backward(fs.traj, fs.emb.v, fs.emb.t, params.readouts,
                                                cfg.readout, fs.readout, align.grad_v,
                                                align.grad_t);
    grads->readouts = rb.params;
    auto sb = coupled_smooth_backward(fs.ops, fs.traj, cfg.smoothing, rb.states_v, rb.states_t);
    ge_v += rb.emb_v;
    ge_t += rb.emb_t;
    ge_v += sb.emb_v;
    ge_t += sb.emb_t;
    add_scaled(ge_v, weights.direct, lin.grad_v);
    add_scaled(ge_t, weights.direct, lin.grad_t);
    if (weights.cde > 0.0) {
      add_scaled(ge_v, cde_scale, cde.grad_v);
      add_scaled(ge_t, cde_scale, cde.grad_t);
    }
    if (cfg.learn_topology) {
      for (Channel c : kChannels) {
        auto& gw = sb.weights[idx(c)];
        if (weights.cde > 0.0) {
          const auto& cw = cde.grad_weights[idx(c)];
          for (std::size_t e = 0; e < gw.size(); ++e) gw[e] += cde_scale * cw[e];
        }
        const auto gl = operator_softmax_backward(fs.ops[c], gw);
        const auto& pattern = graphs[c];
        const auto targets = pattern.targets();
        score_pairs_backward(params.scorers[idx(c)], pick(target_modality(c), fs.emb.v, fs.emb.t),
                             pick(source_modality(c), fs.emb.v, fs.emb.t), targets,
                             pattern.indices, gl, grads->scorers[idx(c)],
                             pick(target_modality(c), ge_v, ge_t),
                             pick(source_modality(c), ge_v, ge_t));
      }
    }
    if (use_topo) {
      add_scaled(ge_v, weights.topo, topo.grad_v);
      add_scaled(ge_t, weights.topo, topo.grad_t);
      for (Channel c : kChannels) {
        auto& g = grads->scorers[idx(c)];
        const auto& t = topo.grad_scorers[idx(c)];
        add_scaled(g.weight, weights.topo, t.weight);
        add_scaled(g.bias, weights.topo, t.bias);
        add_scaled(g.proj, weights.topo, t.proj);
      }
    }
  }
  adapter_backward(ds.features_v, fs.emb.v, fs.emb.norms_v, ge_v, grads->adapters[0]);
  adapter_backward(ds.features_t, fs.emb.t, fs.emb.norms_t, ge_t, grads->adapters[1]);
  return lb;
}

}  // namespace

LossBreakdown total_loss_and_grad(const ModelParams& params, const MagDataset& ds,
                                  const CandidateGraphs& graphs, const ModelConfig& cfg,
                                  const LossWeights& weights, const StepInput& step,
                                  ModelParams& grads) {
  return evaluate(params, ds, graphs, cfg, weights, step, &grads);
}

LossBreakdown total_loss(const ModelParams& params, const MagDataset& ds,
                         const CandidateGraphs& graphs, const ModelConfig& cfg,
                         const LossWeights& weights, const StepInput& step) {
  return evaluate(params, ds, graphs, cfg, weights, step, nullptr);
}

GradCheckReport check_gradients(const ModelParams& params, const ModelParams& analytic,
                                const std::function<double(const ModelParams&)>& loss,
                                double step) {
  if (!analytic.same_shape(params)) {
    throw Error(ErrorKind::DimensionMismatch, "gradient check: shape mismatch");
  }
  GradCheckReport report;
  ModelParams work = params;
  auto slots = work.slots();
  const auto ana = analytic.slots();
  for (std::size_t s = 0; s < slots.size(); ++s) {
    auto& values = slots[s].tensor->data();
    const auto& a = ana[s].tensor->data();
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = loss(work);
      values[i] = saved - step;
      const double down = loss(work);
      values[i] = saved;
      const double num = (up - down) / (2.0 * step);
      diff2 += (a[i] - num) * (a[i] - num);
      a2 += a[i] * a[i];
      n2 += num * num;
    }
    GradCheckEntry entry{slots[s].name, std::sqrt(a2), std::sqrt(n2), 0.0};
    const double denom = entry.analytic_norm + entry.numeric_norm;
    if (denom > 1e-12) entry.rel_error = std::sqrt(diff2) / denom;
    report.max_rel_error = std::max(report.max_rel_error, entry.rel_error);
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace magr
