#pragma once

// Seeded fixtures and trial runners for the restart, collapse and gap
// properties of the smoothing dynamics.

#include <cstddef>
#include <vector>

#include "json.hpp"
#include "magr/rng.hpp"
#include "magr/smoothing.hpp"
#include "magr/topology.hpp"

namespace magr {

/// Random positive weights on `per_row` random sources per row (plus a self
/// loop in the intra channels), row-normalized. Cross rows are never empty.
PropagationOperators random_operators(std::size_t n, std::size_t per_row, SeededRng& rng);

/// Symmetric doubly-stochastic matrix: a convex mix of the identity, a cyclic
/// shift and `perms` random permutations, each averaged with its transpose.
SparseRowMatrix symmetric_doubly_stochastic(std::size_t n, std::size_t perms, SeededRng& rng);

struct ResolventTrial {
  double alpha = 0.0;
  std::size_t steps_bound = 0;     // ceil(ln 1e-9 / ln(1 - alpha)), 1 when alpha = 1
  double residual_at_bound = 0.0;  // from H0 = E
  double fitted_rate = 0.0;        // from a random H0
  bool converged = false;          // residual_at_bound <= 1e-8
  bool rate_ok = false;            // within 10% of 1 - alpha (exactly 0 when alpha = 1)
};

/// Restart iteration on a random joint operator of size 2n against the dense resolvent.
ResolventTrial resolvent_trial(std::size_t n, double alpha, double beta, SeededRng& rng);

struct CollapseTrial {
  std::vector<double> variance;  // mean column variance of M^k E, k = 0..steps
  double ratio = 0.0;            // variance[steps] / variance[0]
  bool collapsed = false;        // ratio < 1e-8
};

/// alpha = 0 powers of an irreducible aperiodic joint operator.
CollapseTrial collapse_trial(std::size_t n, std::size_t steps, double beta, SeededRng& rng);

struct GapTrial {
  double beta = 0.0;
  std::vector<double> gaps;  // |H_v^(k) - H_t^(k)|_F, k = 0..steps
  bool non_increasing = false;
  bool strictly_decreasing = false;  // while the gap is nonzero
};

/// alpha = 0, no normalization, P_v = P_t = S_intra and P_vt = P_tv = S_cross
/// with two different symmetric doubly-stochastic matrices.
GapTrial gap_trial(std::size_t n, std::size_t dim, double beta, std::size_t steps, SeededRng& rng);

nlohmann::json to_json(const ResolventTrial& t);
nlohmann::json to_json(const CollapseTrial& t);
nlohmann::json to_json(const GapTrial& t);

}  // namespace magr
