// Fixed-grid NPMLE by support reduction with equality-constrained Newton
// steps. Used by tests as an oracle for npmle_solve; shares no code with it.
#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include "mixlrt/model.hpp"

namespace mixlrt::testing {

struct OracleResult {
  double loglik = 0.0;
  double max_gradient = 0.0;
  std::vector<double> atoms;
  std::vector<double> weights;
  bool converged = false;
};

// Univariate parameter grid of `points` equispaced nodes covering the axis.
inline OracleResult grid_npmle_oracle(const ParamSpace& space, const Dataset& data, int points, double tol = 1e-9,
                                      int max_outer = 2000) {
  const Axis& ax = space.axis(0);
  const std::size_t n = data.n();
  std::vector<double> grid(points);
  for (int j = 0; j < points; ++j) grid[j] = ax.lo + (ax.hi - ax.lo) * j / (points - 1);

  // Row-scaled kernel matrix: L(i, j) = p_theta_j(X_i) / max_j p_theta_j(X_i).
  Eigen::MatrixXd L(n, points);
  Eigen::VectorXd row_log_max(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = data.values[i];
    double mx = -INFINITY;
    for (int j = 0; j < points; ++j) {
      L(i, j) = space.log_kernel_axis(0, grid[j], x);
      mx = std::max(mx, L(i, j));
    }
    row_log_max(i) = mx;
    for (int j = 0; j < points; ++j) L(i, j) = std::exp(L(i, j) - mx);
  }

  auto objective = [&](const Eigen::VectorXd& f) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::log(f(i));
    return s;
  };

  std::vector<int> support;
  {
    // Start from the single best grid point.
    int best = 0;
    double bv = -INFINITY;
    for (int j = 0; j < points; ++j) {
      const double v = L.col(j).array().log().sum();
      if (v > bv) bv = v, best = j;
    }
    support.push_back(best);
  }
  Eigen::VectorXd w = Eigen::VectorXd::Ones(1);
  OracleResult out;

  for (int outer = 0; outer < max_outer; ++outer) {
    // Inner: Newton on the simplex face spanned by the support.
    for (int inner = 0; inner < 200; ++inner) {
      const int s = static_cast<int>(support.size());
      Eigen::MatrixXd Ls(n, s);
      for (int k = 0; k < s; ++k) Ls.col(k) = L.col(support[k]);
      const Eigen::VectorXd f = Ls * w;
      const Eigen::VectorXd inv = f.cwiseInverse();
      const Eigen::VectorXd g = Ls.transpose() * inv;
      if ((g.array() - static_cast<double>(n)).abs().maxCoeff() <= 1e-11 * n) break;
      const Eigen::MatrixXd B = inv.asDiagonal() * Ls;
      // Newton step: argmin ||B dw - 1|| over sum(dw) = 0, with dw = Z u.
      Eigen::VectorXd dw = Eigen::VectorXd::Zero(s);
      if (s > 1) {
        const Eigen::HouseholderQR<Eigen::MatrixXd> hq(Eigen::MatrixXd::Ones(s, 1));
        const Eigen::MatrixXd Z = (hq.householderQ() * Eigen::MatrixXd::Identity(s, s)).rightCols(s - 1);
        dw = Z * (B * Z).completeOrthogonalDecomposition().solve(Eigen::VectorXd::Ones(n));
      }
      double amax = 1.0;
      int hit = -1;
      for (int k = 0; k < s; ++k)
        if (dw(k) < 0 && -w(k) / dw(k) < amax) amax = -w(k) / dw(k), hit = k;
      const double f0 = objective(f);
      const double slope = g.dot(dw);
      if (!(slope > 0)) break;
      double a = amax;
      Eigen::VectorXd wn;
      while (true) {
        wn = (w + a * dw).cwiseMax(0.0);
        const double fn = objective(Ls * wn);
        if (fn >= f0 + 1e-4 * a * slope || a < 1e-14) break;
        a *= 0.5;
        hit = -1;
      }
      w = wn;
      if (hit >= 0 && a == amax) w(hit) = 0.0;
      // Drop atoms with zero weight.
      std::vector<int> keep;
      std::vector<double> kw;
      for (int k = 0; k < s; ++k)
        if (w(k) > 0) keep.push_back(support[k]), kw.push_back(w(k));
      support = keep;
      w = Eigen::Map<Eigen::VectorXd>(kw.data(), kw.size());
      w /= w.sum();
      if (a < 1e-14) break;
    }
    Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < support.size(); ++k) f += w(k) * L.col(support[k]);
    const Eigen::VectorXd grad = L.transpose() * f.cwiseInverse();
    int jmax = 0;
    const double gmax = grad.maxCoeff(&jmax) - static_cast<double>(n);
    out.max_gradient = gmax;
    out.loglik = objective(f) + row_log_max.sum();
    if (gmax <= tol * n) {
      out.converged = true;
      break;
    }
    if (std::find(support.begin(), support.end(), jmax) != support.end()) break;
    support.push_back(jmax);
    w.conservativeResize(support.size());
    w(support.size() - 1) = 0.0;
    // Give the new atom a small share so the Newton face includes it.
    w *= 1.0 - 1e-3;
    w(support.size() - 1) = 1e-3;
  }
  for (std::size_t k = 0; k < support.size(); ++k) {
    out.atoms.push_back(grid[support[k]]);
    out.weights.push_back(w(k));
  }
  return out;
}

}  // namespace mixlrt::testing
