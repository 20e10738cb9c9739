#include "mixlrt/lrt.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "mixlrt/error.hpp"

namespace mixlrt {

LrtResult lrt_full(const Dataset& data, const MixingMeasure& g0, const ParamSpace& space, const NpmleOptions& opts) {
  g0.validate(space);
  NpmleResult fit = npmle_solve(data, space, opts);
  LrtResult res;
  res.null_loglik = log_likelihood(space, g0, data);
  res.alt_loglik = fit.loglik;
  res.statistic = fit.loglik - res.null_loglik;
  res.gap_bound = fit.gap_bound;
  res.converged = fit.converged;
  res.g_hat = std::move(fit.g_hat);
  return res;
}

// ----------------------------------------------------------- SubmodelFamily

SubmodelFamily::SubmodelFamily(const ParamSpace& space, MixingMeasure g0, int K, int feasibility_points)
    : space_(space), g0_(std::move(g0)), K_(K), polys_(gram_schmidt_polys(g0_, K)) {
  if (K < 1) throw ConfigError("SubmodelFamily: K must be at least 1");
  g0_.validate(space_);
  basis_ = Eigen::MatrixXd::Identity(K, K);
  lipschitz_.resize(K);
  for (int k = 0; k < K; ++k) lipschitz_(k) = polys_.lipschitz(k + 1);
  build_rows_(feasibility_points);
}

void SubmodelFamily::build_rows_(int feasibility_points) {
  std::vector<double> grid;
  if (g0_.is_discrete()) {
    std::map<double, int> seen;
    for (std::size_t j = 0; j < g0_.size(); ++j)
      if (g0_.weight(j) > 0.0) seen[g0_.atom(j)[polys_.axis()]] = 1;
    for (const auto& kv : seen) grid.push_back(kv.first);
    spacing_ = 0.0;
  } else {
    if (feasibility_points < 2) throw ConfigError("SubmodelFamily: need at least 2 feasibility points");
    const double lo = polys_.support_lo(), hi = polys_.support_hi();
    spacing_ = (hi - lo) / (feasibility_points - 1);
    for (int g = 0; g < feasibility_points; ++g) grid.push_back(g == feasibility_points - 1 ? hi : lo + g * spacing_);
  }
  rows_.resize(static_cast<Eigen::Index>(grid.size()), K_);
  std::vector<double> q(K_ + 1);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    polys_.values(grid[g], q);
    Eigen::Map<const Eigen::VectorXd> qv(q.data() + 1, K_);
    rows_.row(static_cast<Eigen::Index>(g)) = (basis_ * qv).transpose();
  }
}

Eigen::VectorXd SubmodelFamily::basis_values(std::span<const double> theta) const {
  std::vector<double> q(K_ + 1);
  polys_.values(theta[polys_.axis()], q);
  Eigen::Map<const Eigen::VectorXd> qv(q.data() + 1, K_);
  return basis_ * qv;
}

double SubmodelFamily::perturbation(std::span<const double> c, std::span<const double> theta) const {
  const Eigen::VectorXd b = basis_values(theta);
  double s = 1.0;
  for (int k = 0; k < K_; ++k) s += c[k] * b(k);
  return s;
}

double SubmodelFamily::lipschitz_margin(std::span<const double> c) const {
  if (spacing_ == 0.0) return 0.0;
  // |d (c.b)| = |c.R q'| <= |c| |q'|, which does not depend on the rotation R.
  Eigen::Map<const Eigen::VectorXd> cv(c.data(), K_);
  return 0.5 * spacing_ * cv.norm() * lipschitz_.norm();
}

bool SubmodelFamily::feasible(std::span<const double> c) const {
  Eigen::Map<const Eigen::VectorXd> cv(c.data(), K_);
  const double margin = lipschitz_margin(c);
  const Eigen::VectorXd s = (rows_ * cv).array() + 1.0;
  return s.minCoeff() >= margin;
}

double SubmodelFamily::H(int k, std::span<const double> x) const {
  double s = 0.0;
  for (std::size_t j = 0; j < g0_.size(); ++j)
    s += g0_.weight(j) * basis_values(g0_.atom(j))(k - 1) * std::exp(space_.log_kernel(g0_.atom(j), x));
  return s;
}

Eigen::MatrixXd SubmodelFamily::h_matrix(const Dataset& data) const {
  const std::size_t J = g0_.size();
  Eigen::MatrixXd B(static_cast<Eigen::Index>(J), K_);
  for (std::size_t j = 0; j < J; ++j) B.row(static_cast<Eigen::Index>(j)) = basis_values(g0_.atom(j)).transpose();
  Eigen::MatrixXd h(static_cast<Eigen::Index>(data.n()), K_);
  std::vector<double> lp(J);
  for (std::size_t i = 0; i < data.n(); ++i) {
    space_.check_observation(data.row(i));
    double ref = kLogZero;
    for (std::size_t j = 0; j < J; ++j) {
      lp[j] = space_.log_kernel(g0_.atom(j), data.row(i));
      ref = std::max(ref, lp[j]);
    }
    double f0 = 0.0;
    Eigen::VectorXd Hs = Eigen::VectorXd::Zero(K_);
    for (std::size_t j = 0; j < J; ++j) {
      const double p = g0_.weight(j) * std::exp(lp[j] - ref);
      f0 += p;
      Hs += p * B.row(static_cast<Eigen::Index>(j)).transpose();
    }
    h.row(static_cast<Eigen::Index>(i)) = (Hs / f0).transpose();
  }
  return h;
}

MixingMeasure SubmodelFamily::perturbed_measure(std::span<const double> c) const {
  std::vector<double> c_vec(c.begin(), c.end());
  if (g0_.is_discrete()) {
    std::vector<double> w(g0_.size());
    double total = 0.0;
    for (std::size_t j = 0; j < g0_.size(); ++j) {
      const double p = perturbation(c_vec, g0_.atom(j));
      if (p < 0.0) throw InputError("perturbed_measure: negative weight");
      w[j] = g0_.weight(j) * p;
      total += w[j];
    }
    for (double& v : w) v /= total;
    return MixingMeasure::discrete(g0_.dim(), g0_.atoms(), std::move(w));
  }
  for (std::size_t j = 0; j < g0_.size(); ++j)
    if (perturbation(c_vec, g0_.atom(j)) < 0.0) throw InputError("perturbed_measure: negative density");
  const MixingMeasure base = g0_;
  const SubmodelFamily self = *this;
  return MixingMeasure::continuous(
      g0_.box_lo(), g0_.box_hi(),
      [base, self, c_vec](std::span<const double> t) { return base.density(t) * self.perturbation(c_vec, t); },
      g0_.nodes_per_axis());
}

SubmodelFamily SubmodelFamily::rotated(const Eigen::MatrixXd& R) const {
  if (R.rows() != K_ || R.cols() != K_) throw InputError("rotated: R must be K x K");
  if (!(R * R.transpose()).isIdentity(1e-10)) throw InputError("rotated: R must be orthogonal");
  SubmodelFamily out = *this;
  out.basis_ = R * basis_;
  out.rows_ = rows_ * R.transpose();
  return out;
}

// ------------------------------------------------------------ lrt_submodel

namespace {

Eigen::VectorXd barrier_solve(const Eigen::MatrixXd& h, const Eigen::MatrixXd& A, double margin, bool& ok) {
  const Eigen::Index K = h.cols();
  Eigen::VectorXd c = Eigen::VectorXd::Zero(K);
  auto objective = [&](const Eigen::VectorXd& cc, double mu, double& val) {
    const Eigen::VectorXd r = (h * cc).array() + 1.0;
    const Eigen::VectorXd s = (A * cc).array() + (1.0 - margin);
    if (r.minCoeff() <= 0.0 || s.minCoeff() <= 0.0) return false;
    val = r.array().log().sum() + mu * s.array().log().sum();
    return true;
  };
  ok = true;
  for (double mu = 1.0; mu >= 1e-14; mu *= 0.1) {
    for (int it = 0; it < 100; ++it) {
      const Eigen::ArrayXd r = (h * c).array() + 1.0;
      const Eigen::ArrayXd s = (A * c).array() + (1.0 - margin);
      const Eigen::MatrixXd hr = h.array().colwise() / r;
      const Eigen::MatrixXd as = A.array().colwise() / s;
      const Eigen::VectorXd grad = hr.colwise().sum().transpose() + mu * as.colwise().sum().transpose();
      const Eigen::MatrixXd negH = hr.transpose() * hr + mu * (as.transpose() * as);
      Eigen::LLT<Eigen::MatrixXd> llt(negH);
      if (llt.info() != Eigen::Success) {
        ok = false;
        return c;
      }
      const Eigen::VectorXd step = llt.solve(grad);
      const double lambda2 = grad.dot(step);
      if (lambda2 < 1e-20) break;
      double cur;
      objective(c, mu, cur);
      double t = 1.0;
      bool accepted = false;
      for (int bt = 0; bt < 60; ++bt, t *= 0.5) {
        double val;
        const Eigen::VectorXd trial = c + t * step;
        if (objective(trial, mu, val) && val >= cur + 0.25 * t * lambda2) {
          c = trial;
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
      if (lambda2 < 1e-13) break;
    }
  }
  return c;
}

}  // namespace

SubmodelResult lrt_submodel(const Eigen::MatrixXd& h, const SubmodelFamily& family) {
  if (h.cols() != family.K()) throw InputError("lrt_submodel: h has the wrong number of columns");
  const Eigen::MatrixXd& A = family.feasibility_rows();
  SubmodelResult res;
  double margin = 0.0;
  Eigen::VectorXd c;
  bool ok = true;
  bool feasible = false;
  for (int round = 0; round < 8; ++round) {
    c = barrier_solve(h, A, margin, ok);
    std::vector<double> cv(c.data(), c.data() + c.size());
    const double need = family.lipschitz_margin(cv);
    if (family.feasible(cv)) {
      feasible = true;
      break;
    }
    if (need >= 1.0) break;
    margin = need;
  }
  res.converged = ok && feasible;
  if (!feasible) {
    // Largest t in [0, 1] with t c feasible; the set is convex and contains 0.
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 60; ++it) {
      const double mid = 0.5 * (lo + hi);
      std::vector<double> cv(static_cast<std::size_t>(c.size()));
      for (Eigen::Index k = 0; k < c.size(); ++k) cv[k] = mid * c(k);
      (family.feasible(cv) ? lo : hi) = mid;
    }
    c *= lo;
  }
  const Eigen::ArrayXd r = (h * c).array() + 1.0;
  res.statistic = r.log().sum();
  res.c.assign(c.data(), c.data() + c.size());
  return res;
}

SubmodelResult lrt_submodel(const Dataset& data, const SubmodelFamily& family) {
  return lrt_submodel(family.h_matrix(data), family);
}

// ------------------------------------------------------------- Hartigan

namespace {

// log((1 - t) + t e^a) computed without overflow.
double log_mix(double t, double a) {
  if (a > 30.0) return a + std::log(t + (1.0 - t) * std::exp(-a));
  return std::log1p(t * std::expm1(a));
}

}  // namespace

double hartigan_lrt(const Dataset& data, const std::vector<double>& thetas, int grid_t) {
  if (data.d != 1) throw InputError("hartigan_lrt: univariate data required");
  if (grid_t < 2) throw InputError("hartigan_lrt: grid_t must be at least 2");
  const std::size_t n = data.n();
  std::vector<double> a(n), u(n);
  double best = 0.0;
  for (double theta : thetas) {
    if (!std::isfinite(theta)) throw InputError("hartigan_lrt: theta must be finite");
    for (std::size_t i = 0; i < n; ++i) {
      a[i] = theta * data.values[i] - 0.5 * theta * theta;
      u[i] = std::expm1(a[i]);
    }
    auto ell = [&](double t) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += log_mix(t, a[i]);
      return s;
    };
    // First and second derivatives of ell: sum u / (1 + t u) and -sum (u / (1 + t u))^2.
    auto dell = [&](double t, double* d2) {
      double s = 0.0, s2 = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double r = std::isinf(u[i]) ? 1.0 / t : u[i] / (1.0 + t * u[i]);
        s += r;
        s2 += r * r;
      }
      if (d2) *d2 = -s2;
      return s;
    };
    // ell is concave in t with ell(0) = 0.
    if (!(dell(0.0, nullptr) > 0.0)) continue;
    if (dell(1.0, nullptr) >= 0.0) {
      best = std::max(best, ell(1.0));
      continue;
    }
    // Grid cell containing the root of the derivative, then safeguarded Newton.
    int klo = 0, khi = grid_t - 1;
    while (khi - klo > 1) {
      const int mid = (klo + khi) / 2;
      (dell(static_cast<double>(mid) / (grid_t - 1), nullptr) > 0.0 ? klo : khi) = mid;
    }
    double lo = static_cast<double>(klo) / (grid_t - 1), hi = static_cast<double>(khi) / (grid_t - 1);
    double t = 0.5 * (lo + hi);
    for (int it = 0; it < 100 && hi - lo > 1e-15; ++it) {
      double d2 = 0.0;
      const double d1 = dell(t, &d2);
      if (d1 == 0.0) break;
      (d1 > 0.0 ? lo : hi) = t;
      const double step = d2 < 0.0 ? t - d1 / d2 : 0.5 * (lo + hi);
      t = step > lo && step < hi ? step : 0.5 * (lo + hi);
      if (std::abs(d1) <= 1e-12 * (1.0 + std::abs(d2))) break;
    }
    best = std::max(best, ell(t));
  }
  return best;
}

}  // namespace mixlrt
