#include "mixlrt/orthopoly.hpp"

#include <algorithm>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <map>
#include <string>

#include "mixlrt/error.hpp"

namespace mixlrt {

void hermite_q_all(int K, double theta0, double x, std::span<double> out) {
  const double y = x - theta0;
  out[0] = 1.0;
  if (K >= 1) out[1] = y;
  for (int k = 1; k < K; ++k) out[k + 1] = y * out[k] - k * out[k - 1];
}

void charlier_q_all(int K, double theta0, double x, std::span<double> out) {
  if (!(theta0 > 0.0)) throw DomainError("charlier_q: theta0 must be positive");
  out[0] = 1.0;
  if (K >= 1) out[1] = x / theta0 - 1.0;
  for (int k = 1; k < K; ++k) out[k + 1] = ((x - k - theta0) * out[k] - k * out[k - 1]) / theta0;
}

double hermite_q(int k, double theta0, double x) {
  if (k < 0) throw InputError("hermite_q: negative order");
  std::vector<double> v(k + 1);
  hermite_q_all(k, theta0, x, v);
  return v[k];
}

double charlier_q(int k, double theta0, double x) {
  if (k < 0) throw InputError("charlier_q: negative order");
  std::vector<double> v(k + 1);
  charlier_q_all(k, theta0, x, v);
  return v[k];
}

std::vector<MultiIndex> multi_indices_of_order(int d, int k) {
  std::vector<MultiIndex> out;
  MultiIndex cur(d, 0);
  auto rec = [&](auto&& self, int l, int left) -> void {
    if (l == d - 1) {
      cur[l] = left;
      out.push_back(cur);
      return;
    }
    for (int v = left; v >= 0; --v) {
      cur[l] = v;
      self(self, l + 1, left - v);
    }
  };
  if (d >= 1) rec(rec, 0, k);
  return out;
}

int order_of(const MultiIndex& alpha) {
  int s = 0;
  for (int a : alpha) s += a;
  return s;
}

double multi_factorial(const MultiIndex& alpha) {
  double f = 1.0;
  for (int a : alpha) f *= std::tgamma(a + 1.0);
  return f;
}

double multinomial(const MultiIndex& alpha) { return std::tgamma(order_of(alpha) + 1.0) / multi_factorial(alpha); }

double a_alpha(const ParamSpace& space, const MultiIndex& alpha, std::span<const double> theta0) {
  double a = 1.0;
  for (int l = 0; l < space.dim(); ++l)
    if (space.axis(l).kind == AxisKind::kPoisson) a *= std::pow(theta0[l], -alpha[l]);
  return a;
}

KernelPolySystem::KernelPolySystem(const ParamSpace& space, std::vector<double> theta0, int max_order)
    : space_(space), theta0_(std::move(theta0)), max_order_(max_order) {
  if (max_order_ < 0) throw ConfigError("KernelPolySystem: negative order");
  if (static_cast<int>(theta0_.size()) != space_.dim()) throw InputError("KernelPolySystem: theta0 dimension");
  for (int l = 0; l < space_.dim(); ++l) {
    if (space_.axis(l).kind == AxisKind::kBinomial)
      throw ConfigError("KernelPolySystem: binomial axes are not supported");
    if (space_.axis(l).kind == AxisKind::kPoisson && !(theta0_[l] > 0.0))
      throw DomainError("KernelPolySystem: Poisson theta0 must be positive");
  }
}

void KernelPolySystem::axis_values(std::span<const double> x, std::vector<double>& out) const {
  const int K1 = max_order_ + 1;
  out.resize(static_cast<std::size_t>(space_.dim()) * K1);
  for (int l = 0; l < space_.dim(); ++l) {
    std::span<double> dst(out.data() + l * K1, K1);
    if (space_.axis(l).kind == AxisKind::kGaussian)
      hermite_q_all(max_order_, theta0_[l], x[l], dst);
    else
      charlier_q_all(max_order_, theta0_[l], x[l], dst);
  }
}

double KernelPolySystem::q_alpha(const MultiIndex& alpha, std::span<const double> x) const {
  if (static_cast<int>(alpha.size()) != space_.dim()) throw InputError("q_alpha: multi-index dimension");
  if (order_of(alpha) > max_order_) throw ConfigError("q_alpha: order exceeds max_order");
  double v = 1.0;
  for (int l = 0; l < space_.dim(); ++l) {
    if (alpha[l] == 0) continue;
    v *= space_.axis(l).kind == AxisKind::kGaussian ? hermite_q(alpha[l], theta0_[l], x[l])
                                                    : charlier_q(alpha[l], theta0_[l], x[l]);
  }
  return v;
}

double KernelPolySystem::a_alpha(const MultiIndex& alpha) const { return mixlrt::a_alpha(space_, alpha, theta0_); }

double product_q_alpha(const KernelPolySystem& system, const MultiIndex& alpha, std::span<const double> x) {
  return system.q_alpha(alpha, x);
}

// ----------------------------------------------------------- G0PolySystem

void G0PolySystem::values(double theta_l, std::span<double> out) const {
  const double y = (theta_l - center_) * scale_;
  out[0] = 1.0;
  if (K_ >= 1) out[1] = (y - alpha_[0]) / beta_[1];
  for (int k = 1; k < K_; ++k) out[k + 1] = ((y - alpha_[k]) * out[k] - beta_[k] * out[k - 1]) / beta_[k + 1];
}

double G0PolySystem::value(int k, double theta_l) const {
  std::vector<double> v(K_ + 1);
  values(theta_l, v);
  return v[k];
}

std::vector<double> G0PolySystem::monomial_coefficients(int k) const {
  // Coefficients in y first, then substitute y = scale * (theta - center).
  std::vector<std::vector<double>> p(k + 1);
  p[0] = {1.0};
  for (int j = 0; j < k; ++j) {
    std::vector<double> next(j + 2, 0.0);
    for (int i = 0; i <= j; ++i) {
      next[i + 1] += p[j][i];
      next[i] -= alpha_[j] * p[j][i];
      if (j >= 1 && i < static_cast<int>(p[j - 1].size())) next[i] -= beta_[j] * p[j - 1][i];
    }
    for (double& c : next) c /= beta_[j + 1];
    p[j + 1] = std::move(next);
  }
  // (s (theta - c))^i = s^i sum_j C(i, j) theta^j (-c)^{i-j}
  std::vector<double> out(k + 1, 0.0);
  for (int i = 0; i <= k; ++i) {
    const double si = std::pow(scale_, i) * p[k][i];
    double binom = 1.0;
    for (int j = 0; j <= i; ++j) {
      out[j] += si * binom * std::pow(-center_, i - j);
      binom = binom * (i - j) / (j + 1);
    }
  }
  return out;
}

namespace {

template <class Real>
void stieltjes(const std::vector<double>& y_nodes, const std::vector<double>& w_nodes, int K, std::vector<double>& alpha,
               std::vector<double>& beta) {
  const std::size_t m = y_nodes.size();
  std::vector<std::vector<Real>> q(K + 1, std::vector<Real>(m));
  std::vector<Real> y(m), w(m);
  for (std::size_t i = 0; i < m; ++i) {
    y[i] = y_nodes[i];
    w[i] = w_nodes[i];
  }
  auto dot = [&](const std::vector<Real>& a, const std::vector<Real>& b) {
    Real s = 0;
    for (std::size_t i = 0; i < m; ++i) s += w[i] * a[i] * b[i];
    return s;
  };
  Real mass = 0;
  for (std::size_t i = 0; i < m; ++i) mass += w[i];
  for (std::size_t i = 0; i < m; ++i) q[0][i] = 1 / sqrt(mass);
  alpha.assign(K + 1, 0.0);
  beta.assign(K + 1, 0.0);
  std::vector<Real> v(m);
  for (int k = 0; k <= K; ++k) {
    for (std::size_t i = 0; i < m; ++i) v[i] = y[i] * q[k][i];
    const Real ak = dot(v, q[k]);
    alpha[k] = static_cast<double>(ak);
    if (k == K) break;
    const Real before = sqrt(dot(v, v));
    for (int pass = 0; pass < 2; ++pass) {
      for (int j = 0; j <= k; ++j) {
        const Real c = dot(v, q[j]);
        for (std::size_t i = 0; i < m; ++i) v[i] -= c * q[j][i];
      }
    }
    const Real nrm = sqrt(dot(v, v));
    if (!(nrm > Real(1e-10) * before))
      throw RankError("gram_schmidt_polys: Gram matrix is singular at order " + std::to_string(k + 1), k + 1);
    beta[k + 1] = static_cast<double>(nrm);
    for (std::size_t i = 0; i < m; ++i) q[k + 1][i] = v[i] / nrm;
  }
}

}  // namespace

G0PolySystem gram_schmidt_polys(const MixingMeasure& g0, int K, int axis) {
  if (K < 0) throw ConfigError("gram_schmidt_polys: negative order");
  const int d = g0.dim();
  if (axis < 0) {
    axis = 0;
    int best = -1;
    for (int l = 0; l < d; ++l) {
      const int c = g0.marginal_support_count(l);
      if (c > K) {
        best = l;
        break;
      }
    }
    if (best < 0) {
      int mx = 0;
      for (int l = 0; l < d; ++l) mx = std::max(mx, g0.marginal_support_count(l));
      throw RankError("gram_schmidt_polys: no axis has more than K support points", mx);
    }
    axis = best;
  }
  if (axis >= d) throw InputError("gram_schmidt_polys: axis out of range");

  std::map<double, double> acc;
  for (std::size_t j = 0; j < g0.size(); ++j)
    if (g0.weight(j) > 0.0) acc[g0.atom(j)[axis]] += g0.weight(j);
  G0PolySystem sys;
  sys.K_ = K;
  sys.axis_ = axis;
  if (!g0.is_discrete()) {
    sys.lo_ = g0.box_lo()[axis];
    sys.hi_ = g0.box_hi()[axis];
  } else {
    sys.lo_ = acc.begin()->first;
    sys.hi_ = acc.rbegin()->first;
  }
  sys.center_ = 0.5 * (sys.lo_ + sys.hi_);
  sys.scale_ = sys.hi_ > sys.lo_ ? 2.0 / (sys.hi_ - sys.lo_) : 1.0;
  std::vector<double> y, w;
  for (const auto& [t, wt] : acc) {
    y.push_back((t - sys.center_) * sys.scale_);
    w.push_back(wt);
  }
  if (K > 10)
    stieltjes<boost::multiprecision::cpp_bin_float_quad>(y, w, K, sys.alpha_, sys.beta_);
  else
    stieltjes<double>(y, w, K, sys.alpha_, sys.beta_);

  // Derivative recurrence on a fine grid, inflated by 10% for between-grid slack.
  sys.lipschitz_.assign(K + 1, 0.0);
  const int grid = 4001;
  std::vector<double> q(K + 1), dq(K + 1);
  for (int gi = 0; gi < grid; ++gi) {
    const double yy = -1.0 + 2.0 * gi / (grid - 1);
    q[0] = 1.0;
    dq[0] = 0.0;
    if (K >= 1) {
      q[1] = (yy - sys.alpha_[0]) / sys.beta_[1];
      dq[1] = 1.0 / sys.beta_[1];
    }
    for (int k = 1; k < K; ++k) {
      q[k + 1] = ((yy - sys.alpha_[k]) * q[k] - sys.beta_[k] * q[k - 1]) / sys.beta_[k + 1];
      dq[k + 1] = ((yy - sys.alpha_[k]) * dq[k] + q[k] - sys.beta_[k] * dq[k - 1]) / sys.beta_[k + 1];
    }
    for (int k = 0; k <= K; ++k) sys.lipschitz_[k] = std::max(sys.lipschitz_[k], std::abs(dq[k]) * sys.scale_);
  }
  for (double& L : sys.lipschitz_) L *= 1.1;
  return sys;
}

}  // namespace mixlrt
