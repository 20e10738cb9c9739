#pragma once

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "mixlrt/model.hpp"
#include "mixlrt/npmle.hpp"
#include "mixlrt/orthopoly.hpp"

namespace mixlrt {

struct LrtResult {
  double statistic = 0.0;
  double gap_bound = 0.0;
  double null_loglik = 0.0;
  double alt_loglik = 0.0;
  bool converged = false;
  MixingMeasure g_hat;
};

/// sup_g loglik(g) - loglik(g0) through the NPMLE.
LrtResult lrt_full(const Dataset& data, const MixingMeasure& g0, const ParamSpace& space, const NpmleOptions& opts = {});

/// Multiplicative perturbations dg_c = (1 + sum_k c_k b_k) dg0 where b = B q~ for
/// an orthogonal K x K matrix B (identity unless rotated).
class SubmodelFamily {
 public:
  SubmodelFamily(const ParamSpace& space, MixingMeasure g0, int K, int feasibility_points = 1024);

  int K() const { return K_; }
  const ParamSpace& space() const { return space_; }
  const MixingMeasure& g0() const { return g0_; }
  const G0PolySystem& polys() const { return polys_; }
  const Eigen::MatrixXd& basis() const { return basis_; }

  /// b_1..b_K at theta (full parameter point).
  Eigen::VectorXd basis_values(std::span<const double> theta) const;
  /// 1 + sum c_k b_k(theta).
  double perturbation(std::span<const double> c, std::span<const double> theta) const;
  /// Feasibility-grid rows b(theta_g), one per grid point.
  const Eigen::MatrixXd& feasibility_rows() const { return rows_; }
  /// Grid spacing on the distinguishing axis; 0 for discrete g0 (grid = atoms).
  double grid_spacing() const { return spacing_; }
  /// Bound on the dip of the perturbation between grid points for coefficients c.
  double lipschitz_margin(std::span<const double> c) const;
  /// True when 1 + c.b >= margin(c) on every grid point.
  bool feasible(std::span<const double> c) const;

  /// H_k(x) = int p_theta(x) b_k(theta) dg0.
  double H(int k, std::span<const double> x) const;
  /// h_k(X_i) = H_k(X_i)/f_g0(X_i), as an n x K matrix.
  Eigen::MatrixXd h_matrix(const Dataset& data) const;

  /// The measure g_c; throws InputError when c is infeasible at a node of g0.
  MixingMeasure perturbed_measure(std::span<const double> c) const;
  /// Same span, basis b' = R b for an orthogonal R.
  SubmodelFamily rotated(const Eigen::MatrixXd& R) const;

 private:
  ParamSpace space_;
  MixingMeasure g0_;
  int K_;
  G0PolySystem polys_;
  Eigen::MatrixXd basis_;
  Eigen::MatrixXd rows_;
  Eigen::VectorXd lipschitz_;
  double spacing_ = 0.0;
  void build_rows_(int feasibility_points);
};

struct SubmodelResult {
  double statistic = 0.0;
  std::vector<double> c;
  bool converged = true;
};

/// max over feasible c of sum_i log(1 + c.h(X_i)) by log-barrier Newton from c = 0.
SubmodelResult lrt_submodel(const Dataset& data, const SubmodelFamily& family);
/// Same maximization for a precomputed h matrix.
SubmodelResult lrt_submodel(const Eigen::MatrixXd& h, const SubmodelFamily& family);

/// max over theta in the list and t in [0, 1] of loglik((1-t) phi + t phi(. - theta)) - loglik(phi).
double hartigan_lrt(const Dataset& data, const std::vector<double>& thetas, int grid_t = 1001);

}  // namespace mixlrt
