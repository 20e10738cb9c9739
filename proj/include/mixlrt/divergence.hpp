#pragma once

#include <span>
#include <vector>

#include "mixlrt/model.hpp"

namespace mixlrt {

/// chi(f_g, f_g0) = ||f_g/f_g0 - 1|| in L2(f_g0 dmu) by quadrature on the ratio form.
/// Throws ResolutionError when the outermost nodes carry more than 1e-8 of the integral.
double chi_divergence(const ParamSpace& space, const MixingMeasure& g, const MixingMeasure& g0, const XQuadrature& xq);

/// s(x) = (f_g(x)/f_g0(x) - 1) / chi.
class ScoreEvaluator {
 public:
  ScoreEvaluator(const ParamSpace& space, MixingMeasure g, MixingMeasure g0, const XQuadrature& xq);

  double chi() const { return chi_; }
  double operator()(std::span<const double> x) const;
  /// Score at the quadrature nodes it was built with.
  const std::vector<double>& node_values() const { return node_values_; }
  const MixingMeasure& g() const { return g_; }
  const MixingMeasure& g0() const { return g0_; }

 private:
  ParamSpace space_;
  MixingMeasure g_, g0_;
  double chi_ = 0.0;
  std::vector<double> node_values_;
};

/// Throws DegenerateDirectionError when chi < 1e-10.
ScoreEvaluator score(const ParamSpace& space, const MixingMeasure& g, const MixingMeasure& g0, const XQuadrature& xq);

/// sup over test points of |f_g/p_theta0 - 1 - sum_{1<=|alpha|<=K} m_alpha/alpha! q_alpha|.
double taylor_gap(const ParamSpace& space, const MixingMeasure& g, std::span<const double> theta0, int K,
                  const std::vector<std::vector<double>>& test_points);

/// Score from the truncated moment series: (p_theta0/f_g0) sum_{1<=|alpha|<=K} (m_alpha,g - m_alpha,g0) q_alpha / (alpha! chi).
std::vector<double> series_score(const ParamSpace& space, const MixingMeasure& g, const MixingMeasure& g0,
                                 std::span<const double> theta0, int K, double chi,
                                 const std::vector<std::vector<double>>& points);

struct SandwichRecord {
  double lower = 0.0;
  double chi2 = 0.0;
  double upper = 0.0;
  /// Bound on the omitted terms k > K_trunc, already included in `upper`.
  double remainder = 0.0;
  double c0 = 0.0;
  bool holds = false;
};

/// Moment-based lower and upper bounds on chi^2. theta0 must be an atom of the discrete g0;
/// C0 is bounded by 1/w0 with w0 the weight of that atom.
SandwichRecord den_sandwich(const ParamSpace& space, const MixingMeasure& g, const MixingMeasure& g0,
                            std::span<const double> theta0, int K_trunc, const XQuadrature& xq);

}  // namespace mixlrt
