#include "magr/training.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "magr/error.hpp"
#include "magr/log.hpp"

namespace magr {

const char* to_string(CheckpointMetric m) {
  switch (m) {
    case CheckpointMetric::RecallAt10: return "R@10";
    case CheckpointMetric::WeightedRecall: return "weighted-recall";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw Error(ErrorKind::Config, "train.lr must be non-negative");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw Error(ErrorKind::Config, "train.beta1 must lie in (0,1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw Error(ErrorKind::Config, "train.beta2 must lie in (0,1)");
  if (!(eps > 0.0)) throw Error(ErrorKind::Config, "train.eps must be positive");
  if (batch_size == 0) throw Error(ErrorKind::Config, "train.batch_size must be >= 1");
  if (warmup_epochs > epochs) throw Error(ErrorKind::Config, "train.warmup_epochs exceeds epochs");
  if (metric == CheckpointMetric::WeightedRecall) {
    throw Error(ErrorKind::Config, "checkpoint metric weighted-recall is not available");
  }
}

AdamState adam_init(const ModelParams& params) {
  return {params.zeros_like(), params.zeros_like(), 0};
}

bool GroupMask::allows(ParamGroup g) const {
  switch (g) {
    case ParamGroup::Adapter: return adapter;
    case ParamGroup::Scorer: return scorer;
    case ParamGroup::Readout: return readout;
  }
  return false;
}

void adam_step(ModelParams& params, const ModelParams& grads, AdamState& state,
               const TrainConfig& cfg, const GroupMask& mask) {
  if (!grads.same_shape(params) || !state.m.same_shape(params)) {
    throw Error(ErrorKind::DimensionMismatch, "adam: buffers do not match parameters");
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(cfg.beta1, t);
  const double c2 = 1.0 - std::pow(cfg.beta2, t);
  auto ps = params.slots();
  const auto gs = grads.slots();
  auto ms = state.m.slots();
  auto vs = state.v.slots();
  for (std::size_t s = 0; s < ps.size(); ++s) {
    if (!mask.allows(ps[s].group)) continue;
    auto& p = ps[s].tensor->data();
    const auto& g = gs[s].tensor->data();
    auto& m = ms[s].tensor->data();
    auto& v = vs[s].tensor->data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      p[i] -= cfg.lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + cfg.eps);
    }
  }
}

RetrievalReport evaluate_split(const ModelParams& params, const MagDataset& ds,
                               const CandidateGraphs& graphs, const ModelConfig& model,
                               Split split, bool full_gallery) {
  const auto nodes = ds.nodes_in(split);
  std::vector<std::size_t> gallery = nodes;
  if (full_gallery) {
    gallery.resize(ds.num_nodes());
    for (std::size_t i = 0; i < gallery.size(); ++i) gallery[i] = i;
  }
  const ForwardState fs = forward(params, ds, graphs, model);
  return retrieval_metrics(fs.z_v(), fs.z_t(), nodes, gallery, to_string(split));
}

namespace {

struct Selection {
  double metric;
  double tie;
};

Selection selection_of(const DirectionMetrics& m) { return {m.r10, m.mrr}; }

bool better(const Selection& a, const Checkpoint& best) {
  return a.metric > best.metric || (a.metric == best.metric && a.tie > best.tie_break);
}

void accumulate(LossBreakdown& acc, const LossBreakdown& b) {
  acc.total += b.total;
  acc.align += b.align;
  acc.direct += b.direct;
  acc.cde += b.cde;
  acc.topo += b.topo;
}

void scale(LossBreakdown& acc, double s) {
  acc.total *= s;
  acc.align *= s;
  acc.direct *= s;
  acc.cde *= s;
  acc.topo *= s;
}

}  // namespace

TrainResult train(const MagDataset& ds, const CandidateGraphs& graphs, const ModelConfig& model,
                  const LossWeights& weights, const TrainConfig& cfg, const TrainHooks& hooks) {
  SeededRng init_rng = SeededRng(cfg.seed).fork(1);
  auto params = init_params(model, ds.features_v.cols(), ds.features_t.cols(), init_rng);
  return train_from(std::move(params), ds, graphs, model, weights, cfg, hooks);
}

TrainResult train_from(ModelParams params, const MagDataset& ds, const CandidateGraphs& graphs,
                       const ModelConfig& model, const LossWeights& weights,
                       const TrainConfig& cfg, const TrainHooks& hooks) {
  cfg.validate();
  model.validate();
  weights.validate();
  const auto train_ids = ds.nodes_in(Split::Train);
  const auto val_ids = ds.nodes_in(Split::Val);
  if (train_ids.empty()) throw Error(ErrorKind::InvalidArgument, "no training nodes");
  if (val_ids.empty()) throw Error(ErrorKind::InvalidArgument, "no validation nodes");

  SeededRng batch_rng = SeededRng(cfg.seed).fork(2);
  SeededRng topo_rng = SeededRng(cfg.seed).fork(3);
  const std::size_t batch = std::min(cfg.batch_size, train_ids.size());

  auto validate_now = [&](const ModelParams& p) {
    if (hooks.on_evaluate) hooks.on_evaluate(Split::Val, val_ids);
    return evaluate_split(p, ds, graphs, model, Split::Val).avg;
  };

  TrainResult result;
  const DirectionMetrics init_val = validate_now(params);
  const Selection init_sel = selection_of(init_val);
  result.best = {0, params, init_sel.metric, init_sel.tie};
  result.log.push_back({0, "init", {}, init_val, true});

  AdamState adam = adam_init(params);
  ModelParams grads = params.zeros_like();
  std::vector<std::size_t> order = train_ids;
  std::size_t stale = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const bool warm = epoch <= cfg.warmup_epochs;
    const bool linear = warm || model.adapter_only;
    const GroupMask mask = linear ? GroupMask{true, false, false} : GroupMask{};
    batch_rng.shuffle(std::span<std::size_t>(order));

    LossBreakdown epoch_loss;
    std::size_t batches = 0;
    try {
      for (std::size_t start = 0; start < order.size(); start += batch) {
        const std::size_t len = std::min(batch, order.size() - start);
        std::span<const std::size_t> ids(order.data() + start, len);
        StepInput step{ids, train_ids, nullptr, linear ? Objective::LinearOnly : Objective::Full};
        TopoSample topo;
        if (!linear && weights.topo > 0.0 && model.learn_topology) {
          topo = sample_topology(graphs, weights.negatives, weights.topo_positives, topo_rng);
          step.topo = &topo;
        }
        const auto lb = total_loss_and_grad(params, ds, graphs, model, weights, step, grads);
        if (!grads.all_finite()) throw Error(ErrorKind::Numeric, "non-finite gradient");
        ModelParams next = params;
        AdamState next_adam = adam;
        adam_step(next, grads, next_adam, cfg, mask);
        if (!next.all_finite()) throw Error(ErrorKind::Numeric, "non-finite parameters after update");
        params = std::move(next);
        adam = std::move(next_adam);
        accumulate(epoch_loss, lb);
        ++batches;
      }
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::Numeric) throw;
      result.aborted = true;
      result.abort_reason = "epoch " + std::to_string(epoch) + ": " + e.what();
      log::warn("training aborted, " + result.abort_reason);
      break;
    }
    if (batches > 0) scale(epoch_loss, 1.0 / static_cast<double>(batches));

    const DirectionMetrics val = validate_now(params);
    const Selection sel = selection_of(val);
    const bool improved = better(sel, result.best);
    if (improved) {
      result.best = {epoch, params, sel.metric, sel.tie};
      stale = 0;
    } else if (!warm) {
      ++stale;
    }
    result.log.push_back({epoch, warm ? "warmup" : (model.adapter_only ? "linear" : "full"),
                          epoch_loss, val, improved});
    result.epochs_run = epoch;
    log::debug("epoch " + std::to_string(epoch) + " loss " + std::to_string(epoch_loss.total) +
               " val R@10 " + std::to_string(val.r10));
    if (hooks.on_epoch) hooks.on_epoch(epoch, params);
    if (!warm && stale >= cfg.patience) {
      result.early_stopped = true;
      break;
    }
  }
  return result;
}

nlohmann::json to_json(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"phase", e.phase},
          {"loss",
           {{"total", e.loss.total},
            {"align", e.loss.align},
            {"direct", e.loss.direct},
            {"cde", e.loss.cde},
            {"topo", e.loss.topo}}},
          {"val", to_json(e.val)},
          {"improved", e.improved}};
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  nlohmann::json manifest{{"epoch", ckpt.epoch},
                          {"metric", ckpt.metric},
                          {"tie_break", ckpt.tie_break},
                          {"tensors", nlohmann::json::array()}};
  for (const auto& s : ckpt.params.slots()) {
    const std::string file = s.name + ".magf";
    write_magf(*s.tensor, dir / file);
    manifest["tensors"].push_back({{"name", s.name},
                                   {"file", file},
                                   {"rows", s.tensor->rows()},
                                   {"cols", s.tensor->cols()}});
  }
  std::ofstream out(dir / "manifest.json", std::ios::trunc);
  if (!out) throw Error(ErrorKind::Io, "cannot write checkpoint manifest in " + dir.string());
  out << manifest.dump(2) << '\n';
}

Checkpoint load_checkpoint(const ModelParams& like, const std::filesystem::path& dir) {
  std::ifstream in(dir / "manifest.json");
  if (!in) throw Error(ErrorKind::Io, "cannot read checkpoint manifest in " + dir.string());
  nlohmann::json manifest;
  try {
    in >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::Parse, std::string("checkpoint manifest: ") + e.what());
  }
  Checkpoint ckpt;
  ckpt.epoch = manifest.at("epoch").get<std::size_t>();
  ckpt.metric = manifest.at("metric").get<double>();
  ckpt.tie_break = manifest.at("tie_break").get<double>();
  ckpt.params = like;
  auto slots = ckpt.params.slots();
  const auto& tensors = manifest.at("tensors");
  if (tensors.size() != slots.size()) throw Error(ErrorKind::Parse, "checkpoint tensor count");
  for (std::size_t s = 0; s < slots.size(); ++s) {
    if (tensors[s].at("name").get<std::string>() != slots[s].name) {
      throw Error(ErrorKind::Parse, "checkpoint tensor order mismatch at " + slots[s].name);
    }
    DenseMatrix m = read_magf(dir / tensors[s].at("file").get<std::string>());
    if (!m.same_shape(*slots[s].tensor)) {
      throw Error(ErrorKind::DimensionMismatch, "checkpoint tensor shape for " + slots[s].name);
    }
    *slots[s].tensor = std::move(m);
  }
  return ckpt;
}

MultiSeedSummary multi_seed_run(std::span<const std::uint64_t> seeds,
                                const std::function<std::map<std::string, double>(std::uint64_t)>& run) {
  if (seeds.empty()) throw Error(ErrorKind::InvalidArgument, "multi-seed run needs a seed");
  MultiSeedSummary summary;
  for (std::uint64_t seed : seeds) {
    SeedOutcome out;
    out.seed = seed;
    try {
      out.metrics = run(seed);
      out.ok = true;
    } catch (const std::exception& e) {
      out.error = e.what();
      log::warn("seed " + std::to_string(seed) + " failed: " + out.error);
    }
    summary.runs.push_back(std::move(out));
  }
  aggregate(summary);
  return summary;
}

void aggregate(MultiSeedSummary& summary) {
  summary.mean.clear();
  summary.stddev.clear();
  std::map<std::string, std::vector<double>> values;
  for (const auto& r : summary.runs) {
    if (!r.ok) continue;
    for (const auto& [k, v] : r.metrics) values[k].push_back(v);
  }
  for (const auto& [k, xs] : values) {
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    summary.mean[k] = mean;
    summary.stddev[k] = xs.size() > 1 ? std::sqrt(ss / static_cast<double>(xs.size() - 1)) : 0.0;
  }
}

nlohmann::json to_json(const MultiSeedSummary& s) {
  nlohmann::json runs = nlohmann::json::array();
  for (const auto& r : s.runs) {
    nlohmann::json j{{"seed", r.seed}, {"ok", r.ok}, {"metrics", r.metrics}};
    if (!r.ok) j["error"] = r.error;
    runs.push_back(std::move(j));
  }
  return {{"runs", runs}, {"mean", s.mean}, {"stddev", s.stddev}};
}

}  // namespace magr
