#include "mixlrt/nnls.hpp"

#include <algorithm>
#include <vector>

namespace mixlrt {

NnlsResult nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, int max_iter, double tol) {
  const Eigen::Index n = A.cols();
  NnlsResult res;
  res.x = Eigen::VectorXd::Zero(n);
  if (n == 0) return res;
  if (max_iter <= 0) max_iter = static_cast<int>(3 * n + 30);
  std::vector<char> passive(n, 0);
  Eigen::VectorXd resid = b;
  Eigen::VectorXd w = A.transpose() * resid;
  if (tol <= 0.0) tol = 1e-12 * std::max(1.0, w.cwiseAbs().maxCoeff());

  auto solve_passive = [&](Eigen::VectorXd& s) {
    std::vector<Eigen::Index> idx;
    for (Eigen::Index j = 0; j < n; ++j)
      if (passive[j]) idx.push_back(j);
    Eigen::MatrixXd Ap(A.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t k = 0; k < idx.size(); ++k) Ap.col(k) = A.col(idx[k]);
    Eigen::VectorXd sp = Ap.colPivHouseholderQr().solve(b);
    s.setZero(n);
    for (std::size_t k = 0; k < idx.size(); ++k) s(idx[k]) = sp(k);
  };

  Eigen::VectorXd s(n);
  while (res.iterations < max_iter) {
    Eigen::Index t = -1;
    double best = tol;
    for (Eigen::Index j = 0; j < n; ++j)
      if (!passive[j] && w(j) > best) {
        best = w(j);
        t = j;
      }
    if (t < 0) break;
    passive[t] = 1;
    for (;;) {
      ++res.iterations;
      solve_passive(s);
      bool feasible = true;
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[j] && s(j) <= 0.0) feasible = false;
      if (feasible) {
        res.x = s;
        break;
      }
      double alpha = 1.0;
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[j] && s(j) <= 0.0) alpha = std::min(alpha, res.x(j) / (res.x(j) - s(j)));
      res.x += alpha * (s - res.x);
      for (Eigen::Index j = 0; j < n; ++j)
        if (passive[j] && res.x(j) <= 1e-15 * std::max(1.0, res.x.cwiseAbs().maxCoeff())) {
          passive[j] = 0;
          res.x(j) = 0.0;
        }
      if (std::none_of(passive.begin(), passive.end(), [](char c) { return c != 0; })) break;
      if (res.iterations >= max_iter) break;
    }
    resid = b - A * res.x;
    w = A.transpose() * resid;
  }
  res.converged = res.iterations < max_iter;
  return res;
}

}  // namespace mixlrt
