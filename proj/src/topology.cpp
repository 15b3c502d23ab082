#include "magr/topology.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "magr/error.hpp"
#include "magr/kernels.hpp"
#include "magr/log.hpp"

namespace magr {

const char* to_string(Channel c) {
  switch (c) {
    case Channel::V: return "v";
    case Channel::T: return "t";
    case Channel::VT: return "vt";
    case Channel::TV: return "tv";
  }
  return "?";
}

Modality target_modality(Channel c) {
  return (c == Channel::V || c == Channel::VT) ? Modality::Visual : Modality::Textual;
}

Modality source_modality(Channel c) {
  return (c == Channel::V || c == Channel::TV) ? Modality::Visual : Modality::Textual;
}

const char* to_string(CandidateMode m) {
  return m == CandidateMode::Hybrid ? "hybrid" : "structure_only";
}

const char* to_string(SelfPairPolicy p) {
  switch (p) {
    case SelfPairPolicy::Exclude: return "exclude";
    case SelfPairPolicy::Allow: return "allow";
    case SelfPairPolicy::Only: return "only";
  }
  return "?";
}

bool EdgePattern::contains(std::size_t target, std::size_t source) const {
  const auto first = indices.begin() + static_cast<std::ptrdiff_t>(offsets[target]);
  const auto last = indices.begin() + static_cast<std::ptrdiff_t>(offsets[target + 1]);
  return std::binary_search(first, last, source);
}

EdgePattern EdgePattern::from_rows(std::vector<std::vector<std::size_t>> rows) {
  EdgePattern p;
  p.num_nodes = rows.size();
  p.offsets.assign(1, 0);
  for (auto& r : rows) {
    std::sort(r.begin(), r.end());
    r.erase(std::unique(r.begin(), r.end()), r.end());
    for (std::size_t s : r) {
      if (s >= rows.size()) throw Error(ErrorKind::InvalidArgument, "edge source out of range");
    }
    p.indices.insert(p.indices.end(), r.begin(), r.end());
    p.offsets.push_back(p.indices.size());
  }
  return p;
}

std::vector<std::size_t> EdgePattern::targets() const {
  std::vector<std::size_t> out(nnz());
  for (std::size_t r = 0; r < num_nodes; ++r) {
    std::fill(out.begin() + static_cast<std::ptrdiff_t>(offsets[r]),
              out.begin() + static_cast<std::ptrdiff_t>(offsets[r + 1]), r);
  }
  return out;
}

std::size_t CandidateGraphs::total_edges() const {
  std::size_t total = 0;
  for (const auto& c : channels) total += c.nnz();
  return total;
}

namespace {

std::size_t clamp_k(std::size_t k, std::size_t n, const char* what) {
  const std::size_t limit = n == 0 ? 0 : n - 1;
  if (k > limit) {
    log::warn(what, "=", k, " exceeds N-1=", limit, "; clamped");
    return limit;
  }
  return k;
}

}  // namespace

CandidateGraphs build_candidates(const MagDataset& ds, const DenseMatrix& feat_v,
                                 const DenseMatrix& feat_t, const CandidateConfig& cfg) {
  const std::size_t n = ds.num_nodes();
  if (feat_v.rows() != n || feat_t.rows() != n) {
    throw Error(ErrorKind::DimensionMismatch, "candidate features must have one row per node");
  }
  std::vector<std::vector<std::size_t>> structural(n);
  for (const auto& e : ds.edges) {
    structural[e.u].push_back(e.v);
    structural[e.v].push_back(e.u);
  }

  std::vector<std::vector<std::size_t>> rows_v = structural, rows_t = structural,
                                        rows_vt = structural;
  if (cfg.mode == CandidateMode::Hybrid) {
    const std::size_t k_intra = clamp_k(cfg.k_intra, n, "k_intra");
    const std::size_t k_cross = clamp_k(cfg.k_cross, n, "k_cross");
    if (k_intra > 0) {
      const auto knn_v = top_k_cosine(feat_v, feat_v, k_intra, true);
      const auto knn_t = top_k_cosine(feat_t, feat_t, k_intra, true);
      for (std::size_t i = 0; i < n; ++i) {
        rows_v[i].insert(rows_v[i].end(), knn_v[i].begin(), knn_v[i].end());
        rows_t[i].insert(rows_t[i].end(), knn_t[i].begin(), knn_t[i].end());
      }
    }
    if (k_cross > 0) {
      if (feat_v.cols() != feat_t.cols()) {
        throw Error(ErrorKind::DimensionMismatch,
                    "cross-modal kNN needs equal visual/textual widths");
      }
      const auto knn_vt = top_k_cosine(feat_v, feat_t, k_cross, true);
      for (std::size_t i = 0; i < n; ++i) {
        rows_vt[i].insert(rows_vt[i].end(), knn_vt[i].begin(), knn_vt[i].end());
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    rows_v[i].push_back(i);
    rows_t[i].push_back(i);
    auto& cross = rows_vt[i];
    switch (cfg.self_pairs) {
      case SelfPairPolicy::Exclude:
        cross.erase(std::remove(cross.begin(), cross.end(), i), cross.end());
        break;
      case SelfPairPolicy::Allow:
        cross.push_back(i);
        break;
      case SelfPairPolicy::Only:
        cross.assign(1, i);
        break;
    }
  }

  CandidateGraphs graphs;
  graphs.config = cfg;
  graphs[Channel::V] = EdgePattern::from_rows(std::move(rows_v));
  graphs[Channel::T] = EdgePattern::from_rows(std::move(rows_t));
  graphs[Channel::VT] = EdgePattern::from_rows(std::move(rows_vt));

  // tv mirrors the vt node pairs with target and source swapped.
  std::vector<std::vector<std::size_t>> rows_tv(n);
  const auto& vt = graphs[Channel::VT];
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t e = vt.offsets[i]; e < vt.offsets[i + 1]; ++e) {
      rows_tv[vt.indices[e]].push_back(i);
    }
  }
  graphs[Channel::TV] = EdgePattern::from_rows(std::move(rows_tv));
  return graphs;
}

EdgeScorer EdgeScorer::zeros(std::size_t hidden, std::size_t dim) {
  return {DenseMatrix(hidden, dim), DenseMatrix(1, hidden), DenseMatrix(1, hidden)};
}

namespace {

void check_scorer(const EdgeScorer& s, const DenseMatrix& target, const DenseMatrix& source) {
  if (s.dim() != target.cols() || s.dim() != source.cols() || s.bias.cols() != s.hidden() ||
      s.proj.cols() != s.hidden()) {
    throw Error(ErrorKind::DimensionMismatch, "edge scorer shape does not match embeddings");
  }
}

// Pre-activation for one pair: hidden = W (x (*) y) + b, written into `pre`;
// the elementwise product goes into `prod`.
inline void scorer_hidden(const EdgeScorer& s, std::span<const double> x,
                          std::span<const double> y, std::span<double> prod,
                          std::span<double> pre) {
  for (std::size_t c = 0; c < prod.size(); ++c) prod[c] = x[c] * y[c];
  for (std::size_t h = 0; h < pre.size(); ++h) {
    pre[h] = s.bias(0, h) + dot(s.weight.row(h), prod);
  }
}

constexpr std::size_t kChunk = 2048;

}  // namespace

std::vector<double> score_pairs(const EdgeScorer& scorer, const DenseMatrix& target_emb,
                                const DenseMatrix& source_emb,
                                std::span<const std::size_t> targets,
                                std::span<const std::size_t> sources) {
  check_scorer(scorer, target_emb, source_emb);
  std::vector<double> logits(targets.size());
  const auto count = static_cast<std::ptrdiff_t>(targets.size());
#pragma omp parallel
  {
    std::vector<double> prod(scorer.dim()), pre(scorer.hidden());
#pragma omp for schedule(static)
    for (std::ptrdiff_t ee = 0; ee < count; ++ee) {
      const auto e = static_cast<std::size_t>(ee);
      scorer_hidden(scorer, target_emb.row(targets[e]), source_emb.row(sources[e]), prod, pre);
      double logit = 0.0;
      for (std::size_t h = 0; h < pre.size(); ++h) logit += scorer.proj(0, h) * std::tanh(pre[h]);
      logits[e] = logit;
    }
  }
  return logits;
}

void score_pairs_backward(const EdgeScorer& scorer, const DenseMatrix& target_emb,
                          const DenseMatrix& source_emb, std::span<const std::size_t> targets,
                          std::span<const std::size_t> sources,
                          std::span<const double> grad_logits, EdgeScorer& grad_scorer,
                          DenseMatrix& grad_target_emb, DenseMatrix& grad_source_emb) {
  check_scorer(scorer, target_emb, source_emb);
  const std::size_t d = scorer.dim(), hid = scorer.hidden();
  DenseMatrix prods(kChunk, d), acts(kChunk, hid), gpre(kChunk, hid), gprod(kChunk, d);
  for (std::size_t start = 0; start < targets.size(); start += kChunk) {
    const std::size_t len = std::min(kChunk, targets.size() - start);
    // Per-pair local gradients; each pair writes only its own scratch rows.
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ll = 0; ll < static_cast<std::ptrdiff_t>(len); ++ll) {
      const auto l = static_cast<std::size_t>(ll);
      const std::size_t e = start + l;
      auto prod = prods.row(l);
      auto act = acts.row(l);
      auto gp = gpre.row(l);
      auto gx = gprod.row(l);
      std::fill(gx.begin(), gx.end(), 0.0);
      const double g = grad_logits[e];
      if (g == 0.0) {
        std::fill(prod.begin(), prod.end(), 0.0);
        std::fill(act.begin(), act.end(), 0.0);
        std::fill(gp.begin(), gp.end(), 0.0);
        continue;
      }
      scorer_hidden(scorer, target_emb.row(targets[e]), source_emb.row(sources[e]), prod, act);
      for (std::size_t h = 0; h < hid; ++h) {
        act[h] = std::tanh(act[h]);
        gp[h] = g * scorer.proj(0, h) * (1.0 - act[h] * act[h]);
        const auto wr = scorer.weight.row(h);
        for (std::size_t c = 0; c < d; ++c) gx[c] += gp[h] * wr[c];
      }
    }
    // Ordered reductions keep results independent of the thread count.
    for (std::size_t l = 0; l < len; ++l) {
      const std::size_t e = start + l;
      const double g = grad_logits[e];
      if (g == 0.0) continue;
      for (std::size_t h = 0; h < hid; ++h) {
        grad_scorer.proj(0, h) += g * acts(l, h);
        grad_scorer.bias(0, h) += gpre(l, h);
      }
      const auto gx = gprod.row(l);
      auto gt = grad_target_emb.row(targets[e]);
      auto gs = grad_source_emb.row(sources[e]);
      const auto xt = target_emb.row(targets[e]);
      const auto xs = source_emb.row(sources[e]);
      for (std::size_t c = 0; c < d; ++c) {
        gt[c] += gx[c] * xs[c];
        gs[c] += gx[c] * xt[c];
      }
    }
    const auto hh = static_cast<std::ptrdiff_t>(hid);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t h = 0; h < hh; ++h) {
      auto gw = grad_scorer.weight.row(static_cast<std::size_t>(h));
      for (std::size_t l = 0; l < len; ++l) {
        const double w = gpre(l, static_cast<std::size_t>(h));
        if (w == 0.0) continue;
        const auto prod = prods.row(l);
        for (std::size_t c = 0; c < d; ++c) gw[c] += w * prod[c];
      }
    }
  }
}

ChannelLogits score_edges(const CandidateGraphs& graphs, const DenseMatrix& emb_v,
                          const DenseMatrix& emb_t, const EdgeScorerParams& params) {
  ChannelLogits logits;
  for (Channel c : kChannels) {
    const auto& pattern = graphs[c];
    const auto targets = pattern.targets();
    const DenseMatrix& tgt = target_modality(c) == Modality::Visual ? emb_v : emb_t;
    const DenseMatrix& src = source_modality(c) == Modality::Visual ? emb_v : emb_t;
    logits[idx(c)] = score_pairs(params[idx(c)], tgt, src, targets, pattern.indices);
  }
  return logits;
}

PropagationOperators normalize_operators(const CandidateGraphs& graphs,
                                         const ChannelLogits& logits) {
  PropagationOperators out;
  for (Channel c : kChannels) {
    const auto& pattern = graphs[c];
    const auto& lg = logits[idx(c)];
    if (lg.size() != pattern.nnz()) {
      throw Error(ErrorKind::DimensionMismatch,
                  std::string("logits misaligned with channel ") + to_string(c));
    }
    std::vector<double> weights(lg.begin(), lg.end());
    bool has_empty = false;
    const auto n = static_cast<std::ptrdiff_t>(pattern.num_nodes);
    for (std::size_t r = 0; r < pattern.num_nodes; ++r) has_empty |= pattern.row_size(r) == 0;
    if (has_empty && !is_cross(c)) {
      throw Error(ErrorKind::InvalidArgument,
                  std::string("intra-modal channel ") + to_string(c) + " has an empty row");
    }
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t r = 0; r < n; ++r) {
      const std::size_t b = pattern.offsets[static_cast<std::size_t>(r)];
      const std::size_t e = pattern.offsets[static_cast<std::size_t>(r) + 1];
      softmax_inplace(std::span<double>(weights).subspan(b, e - b));
    }
    out[c] = SparseRowMatrix(pattern.num_nodes, pattern.num_nodes, pattern.offsets,
                             pattern.indices, std::move(weights), !has_empty);
  }
  return out;
}

PropagationOperators uniform_operators(const CandidateGraphs& graphs) {
  ChannelLogits zeros;
  for (Channel c : kChannels) zeros[idx(c)].assign(graphs[c].nnz(), 0.0);
  return normalize_operators(graphs, zeros);
}

void write_candidates(const CandidateGraphs& graphs, const std::filesystem::path& dir,
                      std::uint64_t seed) {
  std::filesystem::create_directories(dir);
  for (Channel c : kChannels) {
    const auto path = dir / (std::string("candidates_") + to_string(c) + ".txt");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    out << "# channel=" << to_string(c) << " mode=" << to_string(graphs.config.mode)
        << " k_intra=" << graphs.config.k_intra << " k_cross=" << graphs.config.k_cross
        << " self_pairs=" << to_string(graphs.config.self_pairs) << " seed=" << seed << '\n';
    const auto& p = graphs[c];
    for (std::size_t r = 0; r < p.num_nodes; ++r) {
      for (std::size_t e = p.offsets[r]; e < p.offsets[r + 1]; ++e) {
        out << r << ' ' << p.indices[e] << '\n';
      }
    }
  }
}

CandidateGraphs read_candidates(const std::filesystem::path& dir, std::size_t num_nodes) {
  CandidateGraphs graphs;
  for (Channel c : kChannels) {
    const auto path = dir / (std::string("candidates_") + to_string(c) + ".txt");
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path.string());
    std::vector<std::vector<std::size_t>> rows(num_nodes);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (line[0] == '#') {
        std::istringstream hs(line.substr(1));
        std::string kv;
        while (hs >> kv) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos) continue;
          const auto key = kv.substr(0, eq), val = kv.substr(eq + 1);
          if (key == "mode") {
            graphs.config.mode =
                val == "hybrid" ? CandidateMode::Hybrid : CandidateMode::StructureOnly;
          } else if (key == "k_intra") {
            graphs.config.k_intra = std::stoul(val);
          } else if (key == "k_cross") {
            graphs.config.k_cross = std::stoul(val);
          } else if (key == "self_pairs") {
            graphs.config.self_pairs = val == "allow"  ? SelfPairPolicy::Allow
                                       : val == "only" ? SelfPairPolicy::Only
                                                       : SelfPairPolicy::Exclude;
          }
        }
        continue;
      }
      std::istringstream ls(line);
      std::size_t t = 0, s = 0;
      if (!(ls >> t >> s) || t >= num_nodes || s >= num_nodes) {
        throw Error(ErrorKind::Parse, path.string() + ": bad candidate line '" + line + "'");
      }
      rows[t].push_back(s);
    }
    graphs[c] = EdgePattern::from_rows(std::move(rows));
  }
  return graphs;
}

}  // namespace magr
