#include "mixlrt/moments.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "mixlrt/error.hpp"
#include "mixlrt/rng.hpp"

namespace mixlrt {
namespace {

double power_product(const MultiIndex& alpha, std::span<const double> c) {
  double p = 1.0;
  for (std::size_t l = 0; l < alpha.size(); ++l)
    for (int e = 0; e < alpha[l]; ++e) p *= c[l];
  return p;
}

int positive_atom_count(const MixingMeasure& g) {
  int c = 0;
  for (std::size_t j = 0; j < g.size(); ++j) c += g.weight(j) > 0.0;
  return c;
}

}  // namespace

MomentTensor::MomentTensor(int d, int k) : d_(d), k_(k), indices_(multi_indices_of_order(d, k)) {
  if (d < 1 || k < 0) throw InputError("MomentTensor: need d >= 1 and k >= 0");
  multinomials_.reserve(indices_.size());
  for (const auto& a : indices_) multinomials_.push_back(multinomial(a));
  values_.assign(indices_.size(), 0.0);
}

double MomentTensor::entry(const MultiIndex& alpha) const {
  auto it = std::find(indices_.begin(), indices_.end(), alpha);
  if (it == indices_.end()) throw InputError("MomentTensor: multi-index of the wrong order");
  return values_[it - indices_.begin()];
}

double MomentTensor::contract(std::span<const double> c) const {
  double s = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) s += multinomials_[i] * values_[i] * power_product(indices_[i], c);
  return s;
}

void MomentTensor::gradient(std::span<const double> c, std::span<double> out) const {
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < values_.size(); ++i) {
    const MultiIndex& a = indices_[i];
    for (int l = 0; l < d_; ++l) {
      if (a[l] == 0) continue;
      MultiIndex b = a;
      --b[l];
      out[l] += multinomials_[i] * values_[i] * a[l] * power_product(b, c);
    }
  }
}

double MomentTensor::max_norm() const {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

double MomentTensor::frobenius_norm() const {
  double s = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) s += multinomials_[i] * values_[i] * values_[i];
  return std::sqrt(s);
}

MomentTensor MomentTensor::operator-(const MomentTensor& other) const {
  if (other.d_ != d_ || other.k_ != k_) throw InputError("MomentTensor: shape mismatch");
  MomentTensor out(*this);
  for (std::size_t i = 0; i < values_.size(); ++i) out.values_[i] -= other.values_[i];
  return out;
}

MomentTensor MomentTensor::rank_one(std::span<const double> v, int k) {
  MomentTensor T(static_cast<int>(v.size()), k);
  for (std::size_t i = 0; i < T.values_.size(); ++i) T.values_[i] = power_product(T.indices_[i], v);
  return T;
}

double moment(const MixingMeasure& g, int k, double theta0) {
  if (g.dim() != 1) throw InputError("moment: univariate measure required");
  if (k < 0) throw InputError("moment: negative order");
  double s = 0.0;
  for (std::size_t j = 0; j < g.size(); ++j) s += g.weight(j) * std::pow(g.atom(j)[0] - theta0, k);
  return s;
}

MomentTensor moment_tensor(const MixingMeasure& g, int k, std::span<const double> theta0) {
  const int d = g.dim();
  if (static_cast<int>(theta0.size()) != d) throw InputError("moment_tensor: theta0 dimension");
  MomentTensor T(d, k);
  std::vector<double> diff(d);
  for (std::size_t j = 0; j < g.size(); ++j) {
    if (g.weight(j) == 0.0) continue;
    for (int l = 0; l < d; ++l) diff[l] = g.atom(j)[l] - theta0[l];
    for (std::size_t i = 0; i < T.size(); ++i) T[i] += g.weight(j) * power_product(T.indices()[i], diff);
  }
  return T;
}

double tensor_spectral_norm(const MomentTensor& T, const SpectralNormOptions& opts) {
  const int d = T.dim();
  if (T.order() == 0) return std::abs(T[0]);
  if (d == 1) return std::abs(T[0]);
  std::vector<std::vector<double>> starts;
  for (int l = 0; l < d; ++l)
    for (double s : {1.0, -1.0}) {
      std::vector<double> c(d, 0.0);
      c[l] = s;
      starts.push_back(c);
    }
  Philox4x32 rng = make_stream(opts.seed, {stream_tag::kSpectral});
  for (int r = 0; r < opts.random_starts; ++r) {
    std::vector<double> c(d);
    double nrm = 0.0;
    while (nrm < 1e-8) {
      nrm = 0.0;
      for (double& v : c) {
        v = 2.0 * uniform01(rng) - 1.0;
        nrm += v * v;
      }
      if (nrm > 1.0) nrm = 0.0;
    }
    for (double& v : c) v /= std::sqrt(nrm);
    starts.push_back(c);
  }
  double best = 0.0;
  std::vector<double> grad(d), trial(d);
  for (auto c : starts) {
    double f = T.contract(c);
    double sign = f >= 0.0 ? 1.0 : -1.0;
    double val = std::abs(f);
    double step = 1.0;
    for (int it = 0; it < opts.max_iters && step > 1e-16; ++it) {
      T.gradient(c, grad);
      // Tangential component only; the radial part vanishes after normalization.
      double radial = 0.0;
      for (int l = 0; l < d; ++l) radial += grad[l] * c[l];
      double gn = 0.0;
      for (int l = 0; l < d; ++l) {
        grad[l] = sign * (grad[l] - radial * c[l]);
        gn += grad[l] * grad[l];
      }
      if (std::sqrt(gn) <= opts.tol * std::max(1.0, val)) break;
      bool accepted = false;
      // Arc length step * |grad| stays below one radian.
      step = std::min(step, 1.0 / std::sqrt(gn));
      while (step > 1e-16) {
        double tn = 0.0;
        for (int l = 0; l < d; ++l) {
          trial[l] = c[l] + step * grad[l];
          tn += trial[l] * trial[l];
        }
        for (double& v : trial) v /= std::sqrt(tn);
        const double ft = T.contract(trial);
        if (std::abs(ft) >= val + 0.25 * step * gn && std::abs(ft) > val) {
          c = trial;
          sign = ft >= 0.0 ? 1.0 : -1.0;
          val = std::abs(ft);
          step *= 2.0;
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
    }
    best = std::max(best, val);
  }
  return best;
}

double delta_g(const MixingMeasure& g, const MixingMeasure& g0, int J, std::span<const double> theta0) {
  if (J < 1) throw PreconditionError("delta_g: J must be at least 1");
  double m = 0.0;
  for (int k = 1; k <= 2 * J; ++k)
    m = std::max(m, tensor_spectral_norm(moment_tensor(g, k, theta0) - moment_tensor(g0, k, theta0)));
  return m;
}

MclRecord verify_mcl(const ParamSpace& space, const MixingMeasure& g, const MixingMeasure& g0, int k,
                     std::span<const double> theta0, int J) {
  if (!g0.is_discrete()) throw PreconditionError("verify_mcl: g0 must be finitely discrete");
  const int atoms = positive_atom_count(g0);
  if (J <= 0) J = atoms;
  if (J < atoms) throw PreconditionError("verify_mcl: J is below the number of support points of g0");
  if (k <= 2 * J) throw PreconditionError("verify_mcl: requires k > 2J");
  MclRecord rec;
  rec.k = k;
  rec.J = J;
  rec.j_is_atom_count = (J == atoms);
  rec.radius = space.radius_from(theta0);
  rec.lhs = tensor_spectral_norm(moment_tensor(g, k, theta0) - moment_tensor(g0, k, theta0));
  rec.delta = delta_g(g, g0, J, theta0);
  const double base = rec.radius + 1.0;
  rec.bound = k * std::pow(base, 2.0 * J * k) * rec.delta;
  rec.stronger_bound = (k - 2 * J) * std::pow(base, 2.0 * J * (k - 2 * J) + 1.0) * rec.delta;
  rec.holds = rec.lhs <= rec.bound;
  rec.holds_stronger = rec.lhs <= rec.stronger_bound;
  return rec;
}

MixingMeasure gauss_quadrature_match(const MixingMeasure& g0, int r) {
  if (g0.dim() != 1) throw InputError("gauss_quadrature_match: univariate measure required");
  if (g0.is_discrete()) throw PreconditionError("gauss_quadrature_match: g0 must be continuous");
  if (r < 1) throw InputError("gauss_quadrature_match: r must be positive");
  const G0PolySystem sys = gram_schmidt_polys(g0, r - 1, 0);
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(r, r);
  for (int i = 0; i < r; ++i) {
    jac(i, i) = sys.alpha()[i];
    if (i + 1 < r) jac(i, i + 1) = jac(i + 1, i) = sys.beta()[i + 1];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  if (es.info() != Eigen::Success) throw RankError("gauss_quadrature_match: eigensolver failed", r);
  std::vector<double> atoms(r), weights(r);
  double total = 0.0;
  for (int i = 0; i < r; ++i) {
    atoms[i] = sys.center() + es.eigenvalues()(i) / sys.scale();
    weights[i] = es.eigenvectors()(0, i) * es.eigenvectors()(0, i);
    total += weights[i];
  }
  for (double& w : weights) w /= total;
  for (int i = 0; i < r; ++i)
    atoms[i] = std::min(g0.box_hi()[0], std::max(g0.box_lo()[0], atoms[i]));
  return MixingMeasure::discrete(1, std::move(atoms), std::move(weights));
}

}  // namespace mixlrt
