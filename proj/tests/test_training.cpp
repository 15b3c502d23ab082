#include <cmath>
#include <filesystem>
#include <utility>

#include "doctest.h"
#include "magr/error.hpp"
#include "magr/training.hpp"
#include "test_util.hpp"

using namespace magr;

namespace {

struct Setup {
  MagDataset ds;
  CandidateGraphs graphs;
  ModelConfig model;
  LossWeights weights;
  TrainConfig train;
};

Setup small_setup(std::size_t n, std::size_t epochs) {
  Setup s;
  SynthConfig sc;
  sc.num_nodes = n;
  sc.num_classes = 4;
  sc.dim = 16;
  sc.p_in = 0.05;
  sc.p_out = 0.01;
  s.ds = generate_synthetic(sc);
  CandidateConfig cc;
  s.graphs = build_candidates(s.ds, s.ds.features_v, s.ds.features_t, cc);
  s.model.dim = 16;
  s.model.scorer_hidden = 8;
  s.model.smoothing.depth = 2;
  s.model.readout.width = 4;
  s.train.epochs = epochs;
  s.train.warmup_epochs = 2;
  return s;
}

}  // namespace

TEST_CASE("zero epochs returns the initial parameters") {
  auto s = small_setup(60, 0);
  s.train.warmup_epochs = 0;
  const auto r = train(s.ds, s.graphs, s.model, s.weights, s.train);
  SeededRng rng = SeededRng(s.train.seed).fork(1);
  const auto init = init_params(s.model, 16, 16, rng);
  CHECK(r.epochs_run == 0);
  CHECK(r.best.epoch == 0);
  CHECK(r.best.params == init);
  REQUIRE(r.log.size() == 1);
  CHECK(r.log[0].phase == "init");
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
  auto s = small_setup(60, 3);
  s.train.lr = 0.0;
  s.train.patience = 100;
  ModelParams last;
  TrainHooks hooks;
  hooks.on_epoch = [&](std::size_t, const ModelParams& p) { last = p; };
  SeededRng rng(1);
  const auto init = init_params(s.model, 16, 16, rng);
  train_from(init, s.ds, s.graphs, s.model, s.weights, s.train, hooks);
  CHECK(last == init);
}

TEST_CASE("Adam with zero gradient is a no-op") {
  SeededRng rng(2);
  ModelConfig m;
  m.dim = 4;
  m.scorer_hidden = 3;
  m.readout.width = 2;
  auto p = init_params(m, 5, 5, rng);
  const auto before = p;
  auto st = adam_init(p);
  adam_step(p, p.zeros_like(), st, TrainConfig{});
  CHECK(p == before);
  CHECK(st.step == 1);
}

TEST_CASE("Adam steps by lr under a constant gradient") {
  SeededRng rng(3);
  ModelConfig m;
  m.dim = 4;
  m.scorer_hidden = 3;
  m.readout.width = 2;
  auto p = init_params(m, 4, 4, rng);
  const auto start = p;
  auto g = p.zeros_like();
  g.fill(0.5);
  auto st = adam_init(p);
  TrainConfig cfg;
  for (int i = 0; i < 1000; ++i) adam_step(p, g, st, cfg);
  const auto a = start.slots();
  const auto b = std::as_const(p).slots();
  for (std::size_t s = 0; s < a.size(); ++s)
    for (std::size_t k = 0; k < a[s].tensor->size(); ++k) {
      const double per_step = (a[s].tensor->data()[k] - b[s].tensor->data()[k]) / 1000.0;
      CHECK(std::abs(per_step - cfg.lr) < 0.01 * cfg.lr);
    }
}

TEST_CASE("group masks freeze parameters and moments") {
  SeededRng rng(4);
  ModelConfig m;
  m.dim = 4;
  m.scorer_hidden = 3;
  m.readout.width = 2;
  auto p = init_params(m, 4, 4, rng);
  const auto before = p;
  auto g = p.zeros_like();
  g.fill(1.0);
  auto st = adam_init(p);
  GroupMask mask;
  mask.scorer = false;
  mask.readout = false;
  adam_step(p, g, st, TrainConfig{}, mask);
  const auto a = before.slots();
  const auto b = std::as_const(p).slots();
  const auto mo = std::as_const(st.m).slots();
  for (std::size_t s = 0; s < a.size(); ++s) {
    const bool frozen = a[s].group != ParamGroup::Adapter;
    CHECK((*a[s].tensor == *b[s].tensor) == frozen);
    CHECK((max_abs(*mo[s].tensor) == 0.0) == frozen);
  }
}

TEST_CASE("training is deterministic and never evaluates the test split") {
  auto s = small_setup(120, 4);
  std::vector<Split> seen;
  TrainHooks hooks;
  hooks.on_evaluate = [&](Split sp, std::span<const std::size_t>) { seen.push_back(sp); };
  const auto a = train(s.ds, s.graphs, s.model, s.weights, s.train, hooks);
  const auto b = train(s.ds, s.graphs, s.model, s.weights, s.train);
  CHECK(a.best.params == b.best.params);
  CHECK(a.best.epoch == b.best.epoch);
  CHECK_FALSE(seen.empty());
  for (Split sp : seen) CHECK(sp == Split::Val);
  for (std::size_t e = 0; e < a.log.size(); ++e)
    CHECK(a.log[e].loss.total == b.log[e].loss.total);
}

TEST_CASE("full training does not lose validation recall after warm-up") {
  auto s = small_setup(200, 30);
  s.model.dim = 16;
  const auto r = train(s.ds, s.graphs, s.model, s.weights, s.train);
  REQUIRE(r.log.size() > s.train.warmup_epochs);
  const double warm = r.log[s.train.warmup_epochs].val.r1;
  const auto val = evaluate_split(r.best.params, s.ds, s.graphs, s.model, Split::Val);
  CHECK(val.avg.r1 >= warm);
  CHECK(r.best.epoch >= s.train.warmup_epochs);
}

TEST_CASE("invalid training settings are rejected") {
  TrainConfig c;
  c.lr = -1.0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("multi-seed aggregation") {
  const std::vector<std::uint64_t> one{43};
  auto s1 = multi_seed_run(one, [](std::uint64_t) { return std::map<std::string, double>{{"m", 5.0}}; });
  CHECK(s1.mean["m"] == 5.0);
  CHECK(s1.stddev["m"] == 0.0);

  const std::vector<std::uint64_t> same{43, 43};
  auto s2 = multi_seed_run(same, [](std::uint64_t seed) {
    return std::map<std::string, double>{{"m", static_cast<double>(seed)}};
  });
  CHECK(s2.stddev["m"] == 0.0);

  const std::vector<std::uint64_t> three{1, 2, 3};
  auto s3 = multi_seed_run(three, [](std::uint64_t seed) {
    return std::map<std::string, double>{{"m", 2.0 * static_cast<double>(seed)}};
  });
  CHECK(s3.mean["m"] == doctest::Approx(4.0));
  CHECK(s3.stddev["m"] == doctest::Approx(2.0));

  auto s4 = multi_seed_run(three, [](std::uint64_t seed) -> std::map<std::string, double> {
    if (seed == 2) throw Error(ErrorKind::Numeric, "boom");
    return {{"m", static_cast<double>(seed)}};
  });
  CHECK_FALSE(s4.runs[1].ok);
  CHECK(s4.mean["m"] == doctest::Approx(2.0));
}

TEST_CASE("checkpoints round-trip") {
  SeededRng rng(9);
  ModelConfig m;
  m.dim = 4;
  m.scorer_hidden = 3;
  m.readout.width = 2;
  Checkpoint c;
  c.epoch = 7;
  c.params = init_params(m, 6, 5, rng);
  c.metric = 42.5;
  c.tie_break = 12.25;
  const auto dir = std::filesystem::temp_directory_path() / "magr_ckpt_test";
  std::filesystem::remove_all(dir);
  save_checkpoint(c, dir);
  const auto back = load_checkpoint(c.params.zeros_like(), dir);
  CHECK(back.epoch == 7);
  CHECK(back.params == c.params);
  CHECK(back.metric == 42.5);
  CHECK(back.tie_break == 12.25);
  std::filesystem::remove_all(dir);
}
