#pragma once

#include <span>
#include <vector>

#include "mixlrt/model.hpp"

namespace mixlrt {

struct NpmleOptions {
  /// 0 selects 512 for d = 1 and 64 per axis otherwise.
  int grid_per_axis = 0;
  /// Converged when sup_theta D(theta, g) <= tol_gradient * n.
  double tol_gradient = 1e-6;
  int max_iters = 10000;
  /// Local refinement levels (5 points per axis at spacing h / 4^r) before Newton polish.
  int refine_rounds = 2;

  bool operator==(const NpmleOptions&) const = default;
};

struct NpmleResult {
  MixingMeasure g_hat;
  double loglik = 0.0;
  /// Certified bound on sup_g loglik - loglik(g_hat).
  double gap_bound = 0.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> loglik_history;
};

/// D(theta, g) = sum_i p_theta(X_i) / f_g(X_i) - n; kLogZero when some f_g(X_i) vanishes.
double gradient_fn(const ParamSpace& space, const Dataset& data, const MixingMeasure& g, std::span<const double> theta);

/// Maximizes the log-likelihood over all mixing measures on the box.
///
/// Vertex-direction steps add the local maxima of D over a grid (later
/// refined and Newton-polished off the grid); weights are updated by a
/// constrained-Newton NNLS step with Armijo backtracking.
NpmleResult npmle_solve(const Dataset& data, const ParamSpace& space, const NpmleOptions& opts = {});

}  // namespace mixlrt
