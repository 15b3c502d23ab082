#include "magr/oracles.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "magr/error.hpp"
#include "magr/kernels.hpp"

namespace magr {

namespace {

DenseMatrix gaussian(std::size_t rows, std::size_t cols, SeededRng& rng) {
  DenseMatrix m(rows, cols);
  for (double& x : m.data()) x = rng.normal();
  return m;
}

SparseRowMatrix from_row_maps(std::size_t n, const std::vector<std::map<std::size_t, double>>& rows,
                              bool normalize) {
  std::vector<std::size_t> offsets{0}, indices;
  std::vector<double> values;
  for (const auto& row : rows) {
    double sum = 0.0;
    for (const auto& [j, w] : row) sum += w;
    for (const auto& [j, w] : row) {
      indices.push_back(j);
      values.push_back(normalize ? w / sum : w);
    }
    offsets.push_back(indices.size());
  }
  return SparseRowMatrix(n, n, std::move(offsets), std::move(indices), std::move(values), true);
}

SparseRowMatrix random_stochastic(std::size_t n, std::size_t per_row, bool self_loop,
                                  SeededRng& rng) {
  std::vector<std::map<std::size_t, double>> rows(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (self_loop) rows[i][i] = 0.5 + rng.uniform();
    for (std::size_t s = 0; s < per_row; ++s) {
      std::size_t j = rng.uniform_index(n);
      if (!self_loop && j == i) j = (j + 1) % n;
      rows[i][j] += 0.5 + rng.uniform();
    }
  }
  return from_row_maps(n, rows, true);
}

}  // namespace

PropagationOperators random_operators(std::size_t n, std::size_t per_row, SeededRng& rng) {
  if (n < 2 || per_row == 0) throw Error(ErrorKind::InvalidArgument, "random_operators: n >= 2");
  PropagationOperators ops;
  ops[Channel::V] = random_stochastic(n, per_row, true, rng);
  ops[Channel::T] = random_stochastic(n, per_row, true, rng);
  ops[Channel::VT] = random_stochastic(n, per_row, false, rng);
  ops[Channel::TV] = random_stochastic(n, per_row, false, rng);
  return ops;
}

SparseRowMatrix symmetric_doubly_stochastic(std::size_t n, std::size_t perms, SeededRng& rng) {
  if (n < 2) throw Error(ErrorKind::InvalidArgument, "doubly-stochastic fixture needs n >= 2");
  std::vector<std::vector<std::size_t>> maps;
  std::vector<std::size_t> id(n), shift(n);
  for (std::size_t i = 0; i < n; ++i) {
    id[i] = i;
    shift[i] = (i + 1) % n;
  }
  maps.push_back(id);
  maps.push_back(shift);
  for (std::size_t p = 0; p < perms; ++p) {
    std::vector<std::size_t> perm = id;
    rng.shuffle(std::span<std::size_t>(perm));
    maps.push_back(std::move(perm));
  }
  std::vector<double> w(maps.size());
  double total = 0.0;
  for (double& x : w) {
    x = 0.5 + rng.uniform();
    total += x;
  }
  std::vector<std::map<std::size_t, double>> rows(n);
  for (std::size_t m = 0; m < maps.size(); ++m) {
    const double half = 0.5 * w[m] / total;
    for (std::size_t i = 0; i < n; ++i) {
      rows[i][maps[m][i]] += half;  // permutation
      rows[maps[m][i]][i] += half;  // its transpose
    }
  }
  return from_row_maps(n, rows, false);
}

ResolventTrial resolvent_trial(std::size_t n, double alpha, double beta, SeededRng& rng) {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw Error(ErrorKind::InvalidArgument, "resolvent trial needs alpha in (0,1]");
  }
  const auto ops = random_operators(n, 4, rng);
  const SparseRowMatrix joint = joint_operator(ops, beta);
  const DenseMatrix e = gaussian(2 * n, 3, rng);
  const DenseMatrix fixed = resolvent_fixed_point(joint, alpha, e);
  ResolventTrial t;
  t.alpha = alpha;
  t.steps_bound = alpha >= 1.0
                      ? 1
                      : static_cast<std::size_t>(std::ceil(std::log(1e-9) / std::log(1.0 - alpha)));
  const auto from_e = restart_convergence(joint, alpha, e, e, fixed, t.steps_bound);
  t.residual_at_bound = from_e.residuals.back();
  t.converged = t.residual_at_bound <= 1e-8;
  const DenseMatrix start = gaussian(2 * n, 3, rng);
  const auto from_random = restart_convergence(joint, alpha, e, start, fixed, t.steps_bound);
  t.fitted_rate = from_random.fitted_rate;
  const double expected = 1.0 - alpha;
  t.rate_ok = expected == 0.0 ? t.fitted_rate == 0.0
                              : std::abs(t.fitted_rate - expected) <= 0.1 * expected;
  return t;
}

CollapseTrial collapse_trial(std::size_t n, std::size_t steps, double beta, SeededRng& rng) {
  const auto ops = random_operators(n, 6, rng);
  const SparseRowMatrix joint = joint_operator(ops, beta);
  const DenseMatrix e = gaussian(2 * n, 4, rng);
  CollapseTrial t;
  t.variance = collapse_monitor(joint, e, steps);
  t.ratio = t.variance.back() / t.variance.front();
  t.collapsed = t.ratio < 1e-8;
  return t;
}

GapTrial gap_trial(std::size_t n, std::size_t dim, double beta, std::size_t steps,
                   SeededRng& rng) {
  const SparseRowMatrix intra = symmetric_doubly_stochastic(n, 2, rng);
  const SparseRowMatrix cross = symmetric_doubly_stochastic(n, 2, rng);
  PropagationOperators ops;
  ops[Channel::V] = intra;
  ops[Channel::T] = intra;
  ops[Channel::VT] = cross;
  ops[Channel::TV] = cross;
  const DenseMatrix ev = gaussian(n, dim, rng);
  const DenseMatrix et = gaussian(n, dim, rng);
  SmoothingConfig cfg{steps, beta, 0.0, false};
  const auto traj = coupled_smooth(ops, ev, et, cfg);
  GapTrial t;
  t.beta = beta;
  for (std::size_t k = 0; k <= steps; ++k) t.gaps.push_back(gap_norm(traj, k));
  t.non_increasing = true;
  t.strictly_decreasing = true;
  for (std::size_t k = 1; k < t.gaps.size(); ++k) {
    if (t.gaps[k] > t.gaps[k - 1]) t.non_increasing = false;
    if (t.gaps[k - 1] > 0.0 && !(t.gaps[k] < t.gaps[k - 1])) t.strictly_decreasing = false;
  }
  return t;
}

nlohmann::json to_json(const ResolventTrial& t) {
  return {{"alpha", t.alpha},
          {"steps_bound", t.steps_bound},
          {"residual_at_bound", t.residual_at_bound},
          {"fitted_rate", t.fitted_rate},
          {"expected_rate", 1.0 - t.alpha},
          {"converged", t.converged},
          {"rate_ok", t.rate_ok}};
}

nlohmann::json to_json(const CollapseTrial& t) {
  return {{"initial_variance", t.variance.front()},
          {"final_variance", t.variance.back()},
          {"ratio", t.ratio},
          {"collapsed", t.collapsed}};
}

nlohmann::json to_json(const GapTrial& t) {
  return {{"beta", t.beta},
          {"gaps", t.gaps},
          {"non_increasing", t.non_increasing},
          {"strictly_decreasing", t.strictly_decreasing}};
}

}  // namespace magr
