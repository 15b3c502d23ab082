#include "magr/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>

#include "magr/error.hpp"
#include "magr/kernels.hpp"
#include "magr/rng.hpp"

namespace magr {

std::vector<std::size_t> paired_ranks(const DenseMatrix& scores,
                                      std::span<const std::size_t> positive_cols) {
  if (positive_cols.size() != scores.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "one positive column per query row expected");
  }
  std::vector<std::size_t> ranks(scores.rows());
  const auto n = static_cast<std::ptrdiff_t>(scores.rows());
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t rr = 0; rr < n; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    const auto row = scores.row(r);
    const std::size_t p = positive_cols[r];
    const double target = row[p];
    std::size_t ahead = 0;
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c != p && row[c] >= target) ++ahead;
    }
    ranks[r] = ahead + 1;
  }
  return ranks;
}

DirectionMetrics metrics_from_ranks(std::span<const std::size_t> ranks) {
  if (ranks.empty()) throw Error(ErrorKind::InvalidArgument, "retrieval: empty query set");
  DirectionMetrics m;
  for (std::size_t r : ranks) {
    m.r1 += r <= 1 ? 1.0 : 0.0;
    m.r5 += r <= 5 ? 1.0 : 0.0;
    m.r10 += r <= 10 ? 1.0 : 0.0;
    m.mrr += 1.0 / static_cast<double>(r);
    m.mean_rank += static_cast<double>(r);
  }
  const double n = static_cast<double>(ranks.size());
  m.r1 *= 100.0 / n;
  m.r5 *= 100.0 / n;
  m.r10 *= 100.0 / n;
  m.mrr *= 100.0 / n;
  m.mean_rank /= n;
  return m;
}

DirectionMetrics retrieval_from_scores(const DenseMatrix& scores,
                                       std::span<const std::size_t> positive_cols) {
  const auto ranks = paired_ranks(scores, positive_cols);
  return metrics_from_ranks(ranks);
}

namespace {

DirectionMetrics average(const DirectionMetrics& a, const DirectionMetrics& b) {
  return {0.5 * (a.r1 + b.r1), 0.5 * (a.r5 + b.r5), 0.5 * (a.r10 + b.r10),
          0.5 * (a.mrr + b.mrr), 0.5 * (a.mean_rank + b.mean_rank)};
}

}  // namespace

RetrievalReport retrieval_metrics(const DenseMatrix& z_v, const DenseMatrix& z_t,
                                  std::span<const std::size_t> queries,
                                  std::span<const std::size_t> gallery, std::string node_set) {
  if (!z_v.same_shape(z_t)) throw Error(ErrorKind::DimensionMismatch, "retrieval: Z shapes");
  if (queries.empty()) throw Error(ErrorKind::InvalidArgument, "retrieval: empty query set");
  std::vector<std::ptrdiff_t> slot(z_v.rows(), -1);
  for (std::size_t g = 0; g < gallery.size(); ++g) {
    if (gallery[g] >= z_v.rows()) throw Error(ErrorKind::InvalidArgument, "gallery id out of range");
    slot[gallery[g]] = static_cast<std::ptrdiff_t>(g);
  }
  std::vector<std::size_t> positives(queries.size());
  for (std::size_t q = 0; q < queries.size(); ++q) {
    if (queries[q] >= z_v.rows() || slot[queries[q]] < 0) {
      throw Error(ErrorKind::InvalidArgument, "retrieval: query missing from gallery");
    }
    positives[q] = static_cast<std::size_t>(slot[queries[q]]);
  }
  const DenseMatrix qv = z_v.gather_rows(queries), qt = z_t.gather_rows(queries);
  const DenseMatrix gv = z_v.gather_rows(gallery), gt = z_t.gather_rows(gallery);
  RetrievalReport r;
  r.v2t = retrieval_from_scores(matmul_nt(qv, gt), positives);
  r.t2v = retrieval_from_scores(matmul_nt(qt, gv), positives);
  r.avg = average(r.v2t, r.t2v);
  r.num_queries = queries.size();
  r.gallery_size = gallery.size();
  r.node_set = std::move(node_set);
  return r;
}

OverlapReport knn_overlap(const DenseMatrix& features_v, const DenseMatrix& features_t,
                          std::size_t k) {
  if (features_v.rows() != features_t.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "knn_overlap: row counts differ");
  }
  if (k == 0 || k >= features_v.rows()) {
    throw Error(ErrorKind::InvalidArgument, "knn_overlap: need 0 < k < N");
  }
  const auto nv = top_k_cosine(features_v, features_v, k, true);
  const auto nt = top_k_cosine(features_t, features_t, k, true);
  OverlapReport out;
  out.per_node.resize(nv.size());
  for (std::size_t i = 0; i < nv.size(); ++i) {
    std::vector<std::size_t> a = nv[i], b = nt[i];
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::vector<std::size_t> shared;
    std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(shared));
    out.per_node[i] = static_cast<double>(shared.size()) / static_cast<double>(k);
  }
  double sum = 0.0;
  for (double x : out.per_node) sum += x;
  out.mean = sum / static_cast<double>(out.per_node.size());
  out.median = quantile(out.per_node, 0.5);
  return out;
}

const char* to_string(NeighborSource s) {
  switch (s) {
    case NeighborSource::Structural: return "structural";
    case NeighborSource::KnnVisual: return "knn_v";
    case NeighborSource::KnnTextual: return "knn_t";
  }
  return "?";
}

namespace {

std::vector<std::vector<std::size_t>> adjacency(const MagDataset& ds) {
  std::vector<std::vector<std::size_t>> adj(ds.num_nodes());
  for (const auto& e : ds.edges) {
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }
  for (auto& a : adj) std::sort(a.begin(), a.end());
  return adj;
}

}  // namespace

double neighbor_purity(const MagDataset& ds, NeighborSource source, std::size_t k) {
  if (!ds.categories) throw Error(ErrorKind::InvalidArgument, "neighbor purity needs categories");
  const auto& cat = *ds.categories;
  std::vector<std::vector<std::size_t>> nbrs;
  if (source == NeighborSource::Structural) {
    nbrs = adjacency(ds);
  } else {
    const auto& f = source == NeighborSource::KnnVisual ? ds.features_v : ds.features_t;
    if (k == 0 || k >= f.rows()) throw Error(ErrorKind::InvalidArgument, "purity: need 0 < k < N");
    nbrs = top_k_cosine(f, f, k, true);
  }
  double sum = 0.0;
  std::size_t counted = 0;
  for (std::size_t i = 0; i < nbrs.size(); ++i) {
    if (nbrs[i].empty()) continue;
    std::size_t same = 0;
    for (std::size_t j : nbrs[i]) same += cat[j] == cat[i] ? 1 : 0;
    sum += static_cast<double>(same) / static_cast<double>(nbrs[i].size());
    ++counted;
  }
  return counted == 0 ? 0.0 : sum / static_cast<double>(counted);
}

SparseRowMatrix structural_operator(const MagDataset& ds, bool self_loops) {
  auto adj = adjacency(ds);
  const std::size_t n = ds.num_nodes();
  std::vector<std::size_t> offsets{0}, indices;
  std::vector<double> values;
  bool stochastic = true;
  for (std::size_t i = 0; i < n; ++i) {
    auto row = adj[i];
    if (self_loops) row.insert(std::lower_bound(row.begin(), row.end(), i), i);
    if (row.empty()) stochastic = false;
    for (std::size_t j : row) {
      indices.push_back(j);
      values.push_back(1.0 / static_cast<double>(row.size()));
    }
    offsets.push_back(indices.size());
  }
  return SparseRowMatrix(n, n, std::move(offsets), std::move(indices), std::move(values),
                         stochastic);
}

const DepthSweepEntry& DepthSweepReport::best() const {
  if (entries.empty()) throw Error(ErrorKind::InvalidArgument, "empty depth sweep");
  std::size_t b = 0;
  for (std::size_t i = 1; i < entries.size(); ++i) {
    if (entries[i].mean_rank < entries[b].mean_rank) b = i;
  }
  return entries[b];
}

double semantic_separation(const DenseMatrix& states, const std::vector<int>& categories,
                           std::size_t max_pairs, std::uint64_t seed) {
  const std::size_t n = states.rows();
  if (categories.size() != n) throw Error(ErrorKind::DimensionMismatch, "separation: categories");
  const DenseMatrix unit = l2_normalize_rows(states);
  double intra = 0.0, inter = 0.0;
  std::size_t n_intra = 0, n_inter = 0;
  auto visit = [&](std::size_t i, std::size_t j) {
    const double c = dot(unit.row(i), unit.row(j));
    if (categories[i] == categories[j]) {
      intra += c;
      ++n_intra;
    } else {
      inter += c;
      ++n_inter;
    }
  };
  const std::size_t all_pairs = n * (n - 1) / 2;
  if (all_pairs <= max_pairs) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) visit(i, j);
    }
  } else {
    SeededRng rng(seed);
    for (std::size_t s = 0; s < max_pairs; ++s) {
      const std::size_t i = rng.uniform_index(n);
      std::size_t j = rng.uniform_index(n - 1);
      if (j >= i) ++j;
      visit(i, j);
    }
  }
  if (n_intra == 0 || n_inter == 0) return std::numeric_limits<double>::quiet_NaN();
  return intra / static_cast<double>(n_intra) - inter / static_cast<double>(n_inter);
}

DepthSweepReport depth_sweep(const MagDataset& ds, std::span<const std::size_t> depths,
                             std::size_t max_pairs, std::uint64_t seed) {
  for (std::size_t i = 1; i < depths.size(); ++i) {
    if (depths[i] <= depths[i - 1]) {
      throw Error(ErrorKind::InvalidArgument, "depth sweep depths must increase strictly");
    }
  }
  if (ds.features_v.cols() != ds.features_t.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "depth sweep needs equal feature widths");
  }
  const SparseRowMatrix op = structural_operator(ds, true);
  std::vector<std::size_t> all(ds.num_nodes());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  DenseMatrix hv = ds.features_v, ht = ds.features_t;
  std::size_t at = 0;
  DepthSweepReport report;
  for (std::size_t k : depths) {
    for (; at < k; ++at) {
      hv = spmm(op, hv);
      ht = spmm(op, ht);
    }
    const DenseMatrix uv = l2_normalize_rows(hv), ut = l2_normalize_rows(ht);
    DepthSweepEntry e;
    e.depth = k;
    e.mean_rank = retrieval_metrics(uv, ut, all, all).avg.mean_rank;
    if (ds.categories) {
      e.separation = 0.5 * (semantic_separation(uv, *ds.categories, max_pairs, seed) +
                            semantic_separation(ut, *ds.categories, max_pairs, seed));
    } else {
      e.separation = std::numeric_limits<double>::quiet_NaN();
    }
    report.entries.push_back(e);
  }
  return report;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw Error(ErrorKind::InvalidArgument, "quantile of an empty set");
  if (!(q >= 0.0 && q <= 1.0)) throw Error(ErrorKind::InvalidArgument, "quantile outside [0,1]");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return values[lo] + frac * (values[hi] - values[lo]);
}

HardQueryReport hard_query_support(const MagDataset& ds, double low_q, double high_q) {
  if (ds.features_v.cols() != ds.features_t.cols()) {
    throw Error(ErrorKind::DimensionMismatch, "hard-query support needs equal feature widths");
  }
  constexpr double kTieMargin = 1e-9;
  const SparseRowMatrix op = structural_operator(ds, false);
  const DenseMatrix uv = l2_normalize_rows(ds.features_v);
  const DenseMatrix ut = l2_normalize_rows(ds.features_t);
  const DenseMatrix agg = l2_normalize_rows(spmm(op, ut));
  const auto test = ds.nodes_in(Split::Test);
  HardQueryReport r;
  r.num_nodes = test.size();
  if (test.empty()) return r;
  std::vector<double> sim, support;
  for (std::size_t i : test) {
    sim.push_back(dot(uv.row(i), ut.row(i)));
    support.push_back(op.row_size(i) == 0 ? -1.0 : dot(uv.row(i), agg.row(i)));
  }
  r.sim_threshold = quantile(sim, low_q);
  r.support_threshold = quantile(support, high_q);
  for (std::size_t k = 0; k < test.size(); ++k) {
    if (sim[k] < r.sim_threshold - kTieMargin && support[k] > r.support_threshold + kTieMargin) {
      ++r.hard_supported;
    }
  }
  r.fraction = static_cast<double>(r.hard_supported) / static_cast<double>(r.num_nodes);
  return r;
}

nlohmann::json to_json(const DirectionMetrics& m) {
  return {{"R@1", m.r1}, {"R@5", m.r5}, {"R@10", m.r10}, {"MRR", m.mrr}, {"MeanR", m.mean_rank}};
}

nlohmann::json to_json(const RetrievalReport& r) {
  return {{"node_set", r.node_set},       {"queries", r.num_queries},
          {"gallery", r.gallery_size},    {"v2t", to_json(r.v2t)},
          {"t2v", to_json(r.t2v)},        {"avg", to_json(r.avg)}};
}

namespace {

nlohmann::json finite_or_null(double x) {
  return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr);
}

}  // namespace

nlohmann::json to_json(const DepthSweepReport& r) {
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& e : r.entries) {
    rows.push_back({{"depth", e.depth},
                    {"MeanR", e.mean_rank},
                    {"separation", finite_or_null(e.separation)}});
  }
  nlohmann::json out{{"entries", rows}};
  if (!r.entries.empty()) out["best_depth"] = r.best().depth;
  return out;
}

nlohmann::json to_json(const HardQueryReport& r) {
  return {{"test_nodes", r.num_nodes},
          {"hard_supported", r.hard_supported},
          {"fraction", r.fraction},
          {"sim_threshold", r.sim_threshold},
          {"support_threshold", r.support_threshold}};
}

void write_depth_sweep_csv(const DepthSweepReport& r, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
  out.precision(17);
  out << "depth,mean_rank,separation\n";
  for (const auto& e : r.entries) {
    out << e.depth << ',' << e.mean_rank << ',';
    if (std::isfinite(e.separation)) out << e.separation;
    out << '\n';
  }
}

}  // namespace magr
