#include <cmath>

#include "doctest.h"
#include "magr/error.hpp"
#include "magr/kernels.hpp"
#include "magr/oracles.hpp"
#include "magr/smoothing.hpp"
#include "test_util.hpp"

using namespace magr;

namespace {

PropagationOperators all_same(const SparseRowMatrix& p) {
  PropagationOperators ops;
  for (auto& op : ops.ops) op = p;
  return ops;
}

SmoothingConfig cfg_of(std::size_t k, double beta, double alpha, bool norm) {
  SmoothingConfig c;
  c.depth = k;
  c.beta = beta;
  c.alpha = alpha;
  c.normalize_each_step = norm;
  return c;
}

/// Dense reference of one unnormalized coupled step.
void dense_step(const PropagationOperators& ops, double beta, double alpha, const DenseMatrix& ev,
                const DenseMatrix& et, DenseMatrix& hv, DenseMatrix& ht) {
  const DenseMatrix pv = ops[Channel::V].to_dense(), pt = ops[Channel::T].to_dense();
  const DenseMatrix pvt = ops[Channel::VT].to_dense(), ptv = ops[Channel::TV].to_dense();
  DenseMatrix nv = (1 - beta) * matmul(pv, hv) + beta * matmul(pvt, ht);
  DenseMatrix nt = (1 - beta) * matmul(pt, ht) + beta * matmul(ptv, hv);
  hv = (1 - alpha) * nv + alpha * ev;
  ht = (1 - alpha) * nt + alpha * et;
}

}  // namespace

TEST_CASE("identity propagation keeps the input") {
  const DenseMatrix ev = test::random_dense(5, 3, 1), et = test::random_dense(5, 3, 2);
  const auto traj = coupled_smooth(all_same(SparseRowMatrix::identity(5)), ev, et,
                                   cfg_of(3, 0.0, 0.0, false));
  REQUIRE(traj.v.size() == 4);
  for (const auto& h : traj.v) CHECK(h == ev);
  CHECK(traj.t[0] == et);
}

TEST_CASE("full restart forces the anchor") {
  SeededRng rng(3);
  const auto ops = random_operators(6, 3, rng);
  const DenseMatrix ev = test::random_dense(6, 4, 4), et = test::random_dense(6, 4, 5);
  const auto traj = coupled_smooth(ops, ev, et, cfg_of(3, 0.4, 1.0, true));
  for (std::size_t k = 1; k <= 3; ++k) {
    CHECK(max_abs(traj.v[k] - l2_normalize_rows(ev)) < 1e-15);
    CHECK(max_abs(traj.t[k] - l2_normalize_rows(et)) < 1e-15);
  }
}

TEST_CASE("one hand-computed coupled step") {
  const auto half = SparseRowMatrix::from_dense(DenseMatrix{{0.5, 0.5}, {0.5, 0.5}}, true);
  const auto traj = coupled_smooth(all_same(half), DenseMatrix{{1}, {0}}, DenseMatrix{{0}, {1}},
                                   cfg_of(1, 0.5, 0.0, false));
  CHECK(traj.v[1] == DenseMatrix{{0.5}, {0.5}});
  CHECK(traj.t[1] == DenseMatrix{{0.5}, {0.5}});
}

TEST_CASE("coupled_smooth matches a dense reference") {
  SeededRng rng(8);
  const auto ops = random_operators(9, 3, rng);
  const DenseMatrix ev = test::random_dense(9, 4, 9), et = test::random_dense(9, 4, 10);
  const auto traj = coupled_smooth(ops, ev, et, cfg_of(4, 0.3, 0.2, false));
  DenseMatrix hv = ev, ht = et;
  for (std::size_t k = 1; k <= 4; ++k) {
    dense_step(ops, 0.3, 0.2, ev, et, hv, ht);
    CHECK(max_abs(traj.v[k] - hv) < 1e-13);
    CHECK(max_abs(traj.t[k] - ht) < 1e-13);
  }
}

TEST_CASE("trajectory invariants with normalization") {
  SeededRng rng(12);
  const auto ops = random_operators(15, 4, rng);
  const DenseMatrix ev = l2_normalize_rows(test::random_dense(15, 5, 13));
  const DenseMatrix et = l2_normalize_rows(test::random_dense(15, 5, 14));
  const auto traj = coupled_smooth(ops, ev, et, cfg_of(5, 0.3, 0.1, true));
  CHECK(test::bit_equal(traj.v[0], ev));
  CHECK(test::bit_equal(traj.t[0], et));
  for (std::size_t k = 0; k <= 5; ++k)
    for (std::size_t i = 0; i < 15; ++i) {
      double sq = 0.0;
      for (double x : traj.v[k].row(i)) sq += x * x;
      CHECK(std::abs(sq - 1.0) < 1e-12);
    }
}

TEST_CASE("coupled_smooth rejects mismatched shapes") {
  const auto ops = all_same(SparseRowMatrix::identity(3));
  CHECK_THROWS_AS(coupled_smooth(ops, DenseMatrix(3, 2), DenseMatrix(3, 3), SmoothingConfig{}),
                  Error);
  CHECK_THROWS_AS(coupled_smooth(ops, DenseMatrix(4, 2), DenseMatrix(4, 2), SmoothingConfig{}),
                  Error);
}

TEST_CASE("joint operator blocks") {
  SeededRng rng(2);
  const auto ops = random_operators(4, 2, rng);
  const DenseMatrix m0 = joint_operator(ops, 0.0).to_dense();
  const DenseMatrix m1 = joint_operator(ops, 1.0).to_dense();
  const DenseMatrix pv = ops[Channel::V].to_dense(), pvt = ops[Channel::VT].to_dense();
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 4; ++j) {
      CHECK(m0(i, j) == pv(i, j));
      CHECK(m0(i, j + 4) == 0.0);
      CHECK(m1(i, j) == 0.0);
      CHECK(m1(i, j + 4) == pvt(i, j));
    }
  const DenseMatrix mi = joint_operator(all_same(SparseRowMatrix::identity(3)), 0.3).to_dense();
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(std::abs(mi(i, i) - 0.7) < 1e-15);
    CHECK(std::abs(mi(i, i + 3) - 0.3) < 1e-15);
    CHECK(std::abs(mi(i + 3, i) - 0.3) < 1e-15);
  }
  const auto joint = joint_operator(ops, 0.35);
  for (std::size_t r = 0; r < 8; ++r) {
    double sum = 0.0;
    for (std::size_t e = joint.row_begin(r); e < joint.row_end(r); ++e) sum += joint.values()[e];
    CHECK(std::abs(sum - 1.0) < 1e-12);
  }
}

TEST_CASE("resolvent closed forms") {
  SeededRng rng(5);
  const auto ops = random_operators(4, 2, rng);
  const DenseMatrix e = test::random_dense(8, 3, 6);
  CHECK(max_abs(resolvent_fixed_point(ops, 0.3, 1.0, e) - e) < 1e-14);
  const DenseMatrix id = resolvent_fixed_point(SparseRowMatrix::identity(8), 0.5, e);
  CHECK(max_abs(id - e) < 1e-14);
}

TEST_CASE("resolvent matches a long unnormalized iteration") {
  SeededRng rng(7);
  const auto ops = random_operators(4, 3, rng);
  const auto joint = joint_operator(ops, 0.4);
  const DenseMatrix e = test::random_dense(8, 2, 8);
  DenseMatrix h = e;
  for (int k = 0; k < 10000; ++k) h = restart_step(joint, 0.2, e, h);
  CHECK(inf_norm(h - resolvent_fixed_point(joint, 0.2, e)) < 1e-8);
}

TEST_CASE("resolvent refuses oversized operators") {
  const auto big = SparseRowMatrix::identity(2 * kMaxDenseNodes + 2);
  CHECK_THROWS_AS(resolvent_fixed_point(big, 0.5, DenseMatrix(big.rows(), 1)), Error);
}

TEST_CASE("restart convergence rate tracks 1 - alpha") {
  for (double alpha : {0.1, 0.2, 0.3, 0.5}) {
    SeededRng rng(40 + static_cast<std::uint64_t>(alpha * 10));
    const auto t = resolvent_trial(16, alpha, 0.3, rng);
    CHECK(t.converged);
    CHECK(t.rate_ok);
    CHECK(std::abs(t.fitted_rate - (1 - alpha)) <= 0.1 * (1 - alpha));
  }
  SeededRng rng(1);
  const auto full = resolvent_trial(16, 1.0, 0.3, rng);
  CHECK(full.steps_bound == 1);
  CHECK(full.converged);
  CHECK(full.fitted_rate == 0.0);
}

TEST_CASE("gap_norm closed forms") {
  SmoothingTrajectory t;
  t.v = {DenseMatrix{{1}}, DenseMatrix{{1}, {0}}};
  t.t = {DenseMatrix{{1}}, DenseMatrix{{0}, {1}}};
  CHECK(gap_norm(t, 0) == 0.0);
  CHECK(std::abs(gap_norm(t, 1) - std::sqrt(2.0)) < 1e-15);
  t.v[0] = DenseMatrix{{1}};
  t.t[0] = DenseMatrix{{0}};
  CHECK(gap_norm(t, 0) == 1.0);
}

TEST_CASE("collapse monitor") {
  const DenseMatrix e = test::random_dense(4, 3, 2);
  const auto avg = SparseRowMatrix::from_dense(DenseMatrix(4, 4, 0.25), true);
  const auto series = collapse_monitor(avg, e, 3);
  CHECK(series[0] > 0.0);
  CHECK(series[1] < 1e-30);
  const auto flat = collapse_monitor(avg, DenseMatrix(4, 3, 2.0), 1);
  CHECK(flat[0] == 0.0);
  const auto lazy = SparseRowMatrix::from_dense(DenseMatrix{{0.5, 0.5, 0, 0},
                                                            {0.25, 0.5, 0.25, 0},
                                                            {0, 0.25, 0.5, 0.25},
                                                            {0, 0, 0.5, 0.5}},
                                                true);
  const auto walk = collapse_monitor(lazy, e, 50);
  CHECK(walk[50] < 1e-6 * walk[0]);
}

TEST_CASE("collapse and gap trials") {
  SeededRng rng(43);
  const auto c = collapse_trial(16, 100, 0.3, rng);
  CHECK(c.collapsed);
  for (double beta : {0.1, 0.25, 0.4}) {
    const auto g = gap_trial(16, 3, beta, 20, rng);
    CHECK(g.non_increasing);
    CHECK(g.strictly_decreasing);
  }
}

TEST_CASE("symmetric doubly-stochastic fixtures") {
  SeededRng rng(9);
  const DenseMatrix s = symmetric_doubly_stochastic(10, 2, rng).to_dense();
  for (std::size_t i = 0; i < 10; ++i) {
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < 10; ++j) {
      row += s(i, j);
      col += s(j, i);
      CHECK(s(i, j) == s(j, i));
    }
    CHECK(std::abs(row - 1.0) < 1e-12);
    CHECK(std::abs(col - 1.0) < 1e-12);
  }
}

TEST_CASE("smoothing backward matches finite differences") {
  SeededRng rng(17);
  const auto ops = random_operators(5, 2, rng);
  const DenseMatrix ev = test::random_dense(5, 3, 18), et = test::random_dense(5, 3, 19);
  const auto cfg = cfg_of(3, 0.3, 0.2, true);
  std::vector<DenseMatrix> wv, wt;
  for (std::size_t k = 0; k <= 3; ++k) {
    wv.push_back(test::random_dense(5, 3, 50 + k));
    wt.push_back(test::random_dense(5, 3, 60 + k));
  }
  auto loss = [&](const PropagationOperators& o, const DenseMatrix& a, const DenseMatrix& b) {
    const auto tr = coupled_smooth(o, a, b, cfg);
    double sum = 0.0;
    for (std::size_t k = 0; k <= 3; ++k)
      for (std::size_t i = 0; i < 15; ++i)
        sum += wv[k].data()[i] * tr.v[k].data()[i] + wt[k].data()[i] * tr.t[k].data()[i];
    return sum;
  };
  const auto traj = coupled_smooth(ops, ev, et, cfg);
  const auto g = coupled_smooth_backward(ops, traj, cfg, wv, wt);
  const double h = 1e-6;
  for (std::size_t k = 0; k < ev.size(); ++k) {
    DenseMatrix p = ev, m = ev;
    p.data()[k] += h;
    m.data()[k] -= h;
    CHECK(std::abs((loss(ops, p, et) - loss(ops, m, et)) / (2 * h) - g.emb_v.data()[k]) < 1e-7);
  }
  for (Channel c : kChannels) {
    for (std::size_t e = 0; e < ops[c].nnz(); ++e) {
      PropagationOperators p = ops, m = ops;
      p[c].values()[e] += h;
      m[c].values()[e] -= h;
      CHECK(std::abs((loss(p, ev, et) - loss(m, ev, et)) / (2 * h) - g.weights[idx(c)][e]) < 1e-7);
    }
  }
}
