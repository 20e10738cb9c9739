#pragma once

#include <Eigen/Dense>

namespace mixlrt {

struct NnlsResult {
  Eigen::VectorXd x;
  int iterations = 0;
  bool converged = true;
};

/// Lawson–Hanson active-set solver for min ||A x - b|| subject to x >= 0.
NnlsResult nnls(const Eigen::MatrixXd& A, const Eigen::VectorXd& b, int max_iter = 0, double tol = 0.0);

}  // namespace mixlrt
