#include "mixlrt/divergence.hpp"

#include <algorithm>
#include <cmath>

#include "mixlrt/error.hpp"
#include "mixlrt/moments.hpp"
#include "mixlrt/orthopoly.hpp"

namespace mixlrt {
namespace {

constexpr double kDegenerateChi = 1e-10;

double atom_weight(const MixingMeasure& g0, std::span<const double> theta0) {
  double w = 0.0;
  for (std::size_t j = 0; j < g0.size(); ++j)
    if (std::equal(theta0.begin(), theta0.end(), g0.atom(j).begin())) w += g0.weight(j);
  return w;
}

// sum over 1 <= |alpha| <= K of coef_alpha q_alpha(x) / alpha!, with coef taken from tensors.
double moment_series(const KernelPolySystem& sys, const std::vector<MomentTensor>& diffs, std::span<const double> x,
                     std::vector<double>& scratch) {
  const int d = sys.space().dim();
  const int K1 = sys.max_order() + 1;
  sys.axis_values(x, scratch);
  double s = 0.0;
  for (std::size_t k = 1; k < diffs.size(); ++k) {
    const MomentTensor& T = diffs[k];
    for (std::size_t i = 0; i < T.size(); ++i) {
      const MultiIndex& a = T.indices()[i];
      double q = 1.0;
      for (int l = 0; l < d; ++l) q *= scratch[l * K1 + a[l]];
      s += T[i] / multi_factorial(a) * q;
    }
  }
  return s;
}

}  // namespace

double chi_divergence(const ParamSpace& space, const MixingMeasure& g, const MixingMeasure& g0, const XQuadrature& xq) {
  double total = 0.0;
  double edge = 0.0;
  for (std::size_t m = 0; m < xq.size(); ++m) {
    const double l0 = log_mixture_density(space, g0, xq.node(m));
    if (l0 == kLogZero) throw ResolutionError("chi_divergence: f_g0 vanishes at a quadrature node");
    const double lg = log_mixture_density(space, g, xq.node(m));
    const double r = std::expm1(lg - l0);
    const double term = xq.weights[m] * std::exp(l0) * r * r;
    if (!std::isfinite(term)) throw ResolutionError("chi_divergence: integrand overflow");
    total += term;
    if (xq.edge[m]) edge += term;
  }
  if (edge > 1e-8 * total + 1e-300) throw ResolutionError("chi_divergence: integrand not resolved by the quadrature range");
  return std::sqrt(total);
}

ScoreEvaluator::ScoreEvaluator(const ParamSpace& space, MixingMeasure g, MixingMeasure g0, const XQuadrature& xq)
    : space_(space), g_(std::move(g)), g0_(std::move(g0)) {
  chi_ = chi_divergence(space_, g_, g0_, xq);
  if (!(chi_ >= kDegenerateChi)) throw DegenerateDirectionError("score: chi below 1e-10, direction is degenerate");
  node_values_.resize(xq.size());
  for (std::size_t m = 0; m < xq.size(); ++m) node_values_[m] = (*this)(xq.node(m));
}

double ScoreEvaluator::operator()(std::span<const double> x) const {
  const double l0 = log_mixture_density(space_, g0_, x);
  const double lg = log_mixture_density(space_, g_, x);
  return std::expm1(lg - l0) / chi_;
}

ScoreEvaluator score(const ParamSpace& space, const MixingMeasure& g, const MixingMeasure& g0, const XQuadrature& xq) {
  return ScoreEvaluator(space, g, g0, xq);
}

double taylor_gap(const ParamSpace& space, const MixingMeasure& g, std::span<const double> theta0, int K,
                  const std::vector<std::vector<double>>& test_points) {
  if (K < 1) throw InputError("taylor_gap: K must be at least 1");
  KernelPolySystem sys(space, {theta0.begin(), theta0.end()}, K);
  std::vector<MomentTensor> moments;
  for (int k = 0; k <= K; ++k) moments.push_back(moment_tensor(g, k, theta0));
  std::vector<double> scratch;
  double gap = 0.0;
  for (const auto& x : test_points) {
    const double lp0 = space.log_kernel(theta0, x);
    double ratio = 0.0;
    for (std::size_t j = 0; j < g.size(); ++j) ratio += g.weight(j) * std::exp(space.log_kernel(g.atom(j), x) - lp0);
    const double series = moment_series(sys, moments, x, scratch);
    gap = std::max(gap, std::abs(ratio - 1.0 - series));
  }
  return gap;
}

std::vector<double> series_score(const ParamSpace& space, const MixingMeasure& g, const MixingMeasure& g0,
                                 std::span<const double> theta0, int K, double chi,
                                 const std::vector<std::vector<double>>& points) {
  KernelPolySystem sys(space, {theta0.begin(), theta0.end()}, K);
  std::vector<MomentTensor> diffs;
  for (int k = 0; k <= K; ++k) diffs.push_back(moment_tensor(g, k, theta0) - moment_tensor(g0, k, theta0));
  std::vector<double> scratch;
  std::vector<double> out;
  out.reserve(points.size());
  for (const auto& x : points) {
    const double ratio = std::exp(space.log_kernel(theta0, x) - log_mixture_density(space, g0, x));
    out.push_back(ratio * moment_series(sys, diffs, x, scratch) / chi);
  }
  return out;
}

SandwichRecord den_sandwich(const ParamSpace& space, const MixingMeasure& g, const MixingMeasure& g0,
                            std::span<const double> theta0, int K_trunc, const XQuadrature& xq) {
  if (!g0.is_discrete()) throw PreconditionError("den_sandwich: g0 must be finitely discrete");
  const double w0 = atom_weight(g0, theta0);
  if (!(w0 > 0.0)) throw PreconditionError("den_sandwich: theta0 must be a support point of g0");
  const int d = space.dim();
  SandwichRecord rec;
  rec.c0 = 1.0 / w0;
  const double chi = chi_divergence(space, g, g0, xq);
  rec.chi2 = chi * chi;

  KernelPolySystem sys(space, {theta0.begin(), theta0.end()}, K_trunc);
  std::vector<double> f0(xq.size());
  for (std::size_t m = 0; m < xq.size(); ++m) f0[m] = std::exp(log_mixture_density(space, g0, xq.node(m)));
  // int q_alpha^2 f_g0 per alpha, accumulated from per-axis values.
  const int K1 = K_trunc + 1;
  std::vector<std::vector<MultiIndex>> indices(K1);
  std::vector<std::vector<double>> q2(K1);
  for (int k = 1; k <= K_trunc; ++k) {
    indices[k] = multi_indices_of_order(d, k);
    q2[k].assign(indices[k].size(), 0.0);
  }
  std::vector<double> vals;
  for (std::size_t m = 0; m < xq.size(); ++m) {
    sys.axis_values(xq.node(m), vals);
    const double wf = xq.weights[m] * f0[m];
    for (int k = 1; k <= K_trunc; ++k)
      for (std::size_t i = 0; i < indices[k].size(); ++i) {
        double q = 1.0;
        for (int l = 0; l < d; ++l) q *= vals[l * K1 + indices[k][i][l]];
        q2[k][i] += wf * q * q;
      }
  }

  double upper = 0.0;
  double A = 1.0;
  for (int l = 0; l < d; ++l)
    if (space.axis(l).kind == AxisKind::kPoisson) A = std::max(A, 1.0 / theta0[l]);
  double kfact = 1.0;
  for (int k = 1; k <= K_trunc; ++k) {
    kfact *= k;
    const MomentTensor diff = moment_tensor(g, k, theta0) - moment_tensor(g0, k, theta0);
    double min_ratio = std::numeric_limits<double>::infinity();
    double sup_a = 0.0;
    for (std::size_t i = 0; i < indices[k].size(); ++i) {
      const double a = a_alpha(space, indices[k][i], theta0);
      min_ratio = std::min(min_ratio, a * a / q2[k][i]);
      sup_a = std::max(sup_a, a);
    }
    const double mx = diff.max_norm();
    rec.lower = std::max(rec.lower, min_ratio * mx * mx);
    const double fr = diff.frobenius_norm();
    upper += sup_a * fr * fr / kfact;
  }
  // Omitted orders: ||m_k diff||_F <= 2 (sqrt(d) M)^k and sup a_alpha <= A^k.
  const double M = space.radius_from(theta0);
  const double rate = A * d * M * M;
  double term = 1.0;
  for (int k = 1; k <= K_trunc; ++k) term *= rate / k;
  double remainder = 0.0;
  for (int k = K_trunc + 1; k < K_trunc + 400; ++k) {
    term *= rate / k;
    remainder += term;
    if (term < 1e-300 || term < 1e-18 * remainder) break;
  }
  rec.remainder = 4.0 * rec.c0 * remainder;
  rec.upper = rec.c0 * upper + rec.remainder;
  // Equality is attained for point-mass g0; allow quadrature rounding.
  const double slack = 1e-9 * rec.chi2;
  rec.holds = rec.lower <= rec.chi2 + slack && rec.chi2 <= rec.upper + slack;
  return rec;
}

}  // namespace mixlrt
