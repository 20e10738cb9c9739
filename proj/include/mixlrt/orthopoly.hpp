#pragma once

#include <span>
#include <vector>

#include "mixlrt/model.hpp"

namespace mixlrt {

using MultiIndex = std::vector<int>;

/// Probabilists' Hermite polynomial He_k(x - theta0): the k-th theta-derivative
/// of phi(x - theta)/phi(x - theta0) at theta0.
double hermite_q(int k, double theta0, double x);
/// k-th t-derivative at 0 of e^{-t}(1 + t/theta0)^x. Throws DomainError for theta0 <= 0.
double charlier_q(int k, double theta0, double x);
/// Values for orders 0..K into out (size K+1).
void hermite_q_all(int K, double theta0, double x, std::span<double> out);
void charlier_q_all(int K, double theta0, double x, std::span<double> out);

/// All multi-indices over d axes with |alpha| = k, in lexicographically decreasing order.
std::vector<MultiIndex> multi_indices_of_order(int d, int k);
int order_of(const MultiIndex& alpha);
/// alpha! = prod alpha_l!.
double multi_factorial(const MultiIndex& alpha);
/// Multinomial |alpha|! / alpha!.
double multinomial(const MultiIndex& alpha);

/// prod_l V_l^{-alpha_l} with V = 1 on Gaussian axes and theta0_l on Poisson axes.
double a_alpha(const ParamSpace& space, const MultiIndex& alpha, std::span<const double> theta0);

/// Product polynomials q_alpha attached to p_theta0.
class KernelPolySystem {
 public:
  KernelPolySystem(const ParamSpace& space, std::vector<double> theta0, int max_order);

  int max_order() const { return max_order_; }
  const std::vector<double>& theta0() const { return theta0_; }
  const ParamSpace& space() const { return space_; }

  /// Per-axis values q_0..q_K at x, laid out as out[l * (K + 1) + k].
  void axis_values(std::span<const double> x, std::vector<double>& out) const;
  /// Throws ConfigError when |alpha| exceeds the maximum order.
  double q_alpha(const MultiIndex& alpha, std::span<const double> x) const;
  double a_alpha(const MultiIndex& alpha) const;

 private:
  ParamSpace space_;
  std::vector<double> theta0_;
  int max_order_;
};

double product_q_alpha(const KernelPolySystem& system, const MultiIndex& alpha, std::span<const double> x);

/// Polynomials in theta_l orthonormal in L2(g0), q~_0 = 1.
///
/// Internally the variable is y = (theta_l - center) * scale in [-1, 1] and
///   y q~_k = beta_{k+1} q~_{k+1} + alpha_k q~_k + beta_k q~_{k-1}.
class G0PolySystem {
 public:
  int order() const { return K_; }
  int axis() const { return axis_; }
  double support_lo() const { return lo_; }
  double support_hi() const { return hi_; }

  /// q~_0..q~_K at theta_l.
  void values(double theta_l, std::span<double> out) const;
  double value(int k, double theta_l) const;
  /// q~_k at the l-th coordinate of a full parameter point.
  double value_at(int k, std::span<const double> theta) const { return value(k, theta[axis_]); }

  const std::vector<double>& alpha() const { return alpha_; }
  const std::vector<double>& beta() const { return beta_; }
  double center() const { return center_; }
  double scale() const { return scale_; }

  /// Coefficients c_0..c_k with q~_k(theta) = sum_j c_j theta^j.
  std::vector<double> monomial_coefficients(int k) const;
  /// Upper bound on |d q~_k / d theta| over the support interval.
  double lipschitz(int k) const { return lipschitz_[k]; }

 private:
  friend G0PolySystem gram_schmidt_polys(const MixingMeasure&, int, int);
  int K_ = 0;
  int axis_ = 0;
  double lo_ = 0.0, hi_ = 1.0, center_ = 0.0, scale_ = 1.0;
  std::vector<double> alpha_;
  std::vector<double> beta_;
  std::vector<double> lipschitz_;
};

/// Stieltjes/Gram–Schmidt with full re-orthogonalization against the marginal
/// of g0 on `axis` (the first axis with more than K support points when axis < 0).
/// Uses 128-bit floats when K > 10. Throws RankError naming the failing order.
G0PolySystem gram_schmidt_polys(const MixingMeasure& g0, int K, int axis = -1);

}  // namespace mixlrt
