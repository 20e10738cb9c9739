#include "mixlrt/limit_sim.hpp"

#include <algorithm>
#include <boost/random/normal_distribution.hpp>
#include <cmath>

#include "mixlrt/divergence.hpp"
#include "mixlrt/error.hpp"
#include "mixlrt/moments.hpp"
#include "mixlrt/nnls.hpp"
#include "mixlrt/parallel.hpp"
#include "mixlrt/stats.hpp"

namespace mixlrt {
namespace {

double radical_inverse(std::uint64_t k, int base) {
  double inv = 1.0 / base, f = inv, r = 0.0;
  while (k > 0) {
    r += f * static_cast<double>(k % base);
    k /= base;
    f *= inv;
  }
  return r;
}

constexpr int kPrimes[] = {2, 3, 5, 7, 11, 13};

struct Candidate {
  MixingMeasure g;
  ScoreSource source;
  bool negatable = false;
  bool generator = false;
};

bool supported_on(const MixingMeasure& g, const MixingMeasure& g0) {
  for (std::size_t j = 0; j < g.size(); ++j) {
    if (g.weight(j) == 0.0) continue;
    bool found = false;
    for (std::size_t i = 0; i < g0.size() && !found; ++i)
      found = g0.weight(i) > 0.0 && std::equal(g.atom(j).begin(), g.atom(j).end(), g0.atom(i).begin());
    if (!found) return false;
  }
  return true;
}

class Builder {
 public:
  Builder(const ParamSpace& space, const MixingMeasure& g0, std::uint64_t seed) : space_(space), g0_(g0), seed_(seed) {
    d_ = space.dim();
    for (std::size_t j = 0; j < g0.size(); ++j)
      if (g0.weight(j) > 0.0) {
        atoms_.push_back({g0.atom(j).begin(), g0.atom(j).end()});
        weights_.push_back(g0.weight(j));
      }
    J_ = static_cast<int>(atoms_.size());
  }

  Candidate make(std::uint64_t k) const {
    Philox4x32 rng = make_stream(seed_, {stream_tag::kDictionary, k});
    auto u = [&rng] { return uniform01(rng); };
    const std::uint64_t c = k / 4;
    switch (k % 4) {
      case 0: return random_discrete(u);
      case 1: return perturbation(u, c % 2 == 0);
      case 2: return quadrature_matched(u);
      default: return extreme_ray(c);
    }
  }

 private:
  const ParamSpace& space_;
  const MixingMeasure& g0_;
  std::uint64_t seed_;
  int d_ = 1;
  int J_ = 0;
  std::vector<std::vector<double>> atoms_;
  std::vector<double> weights_;

  double lo(int l) const { return space_.axis(l).lo; }
  double hi(int l) const { return space_.axis(l).hi; }

  template <class U>
  Candidate random_discrete(U& u) const {
    const int count = 1 + std::min(2 * J_ + 2, static_cast<int>(u() * (2 * J_ + 3)));
    std::vector<double> atoms(static_cast<std::size_t>(count) * d_), w(count);
    double total = 0.0;
    for (int a = 0; a < count; ++a) {
      for (int l = 0; l < d_; ++l) atoms[a * d_ + l] = lo(l) + (hi(l) - lo(l)) * u();
      w[a] = -std::log(1.0 - u());
      total += w[a];
    }
    for (double& v : w) v /= total;
    Candidate cand{MixingMeasure::discrete(d_, std::move(atoms), std::move(w)), ScoreSource::kRandomDiscrete};
    cand.negatable = supported_on(cand.g, g0_);
    return cand;
  }

  template <class U>
  Candidate perturbation(U& u, bool tilt_only) const {
    const double eps = std::pow(10.0, -4.0 + 3.0 * u());
    std::vector<double> atoms, w(J_);
    double total = 0.0;
    for (int j = 0; j < J_; ++j) {
      for (int l = 0; l < d_; ++l) {
        double t = atoms_[j][l];
        if (!tilt_only) t = std::clamp(t + eps * (hi(l) - lo(l)) * (2.0 * u() - 1.0), lo(l), hi(l));
        atoms.push_back(t);
      }
      w[j] = weights_[j] * std::exp(eps * (2.0 * u() - 1.0));
      total += w[j];
    }
    for (double& v : w) v /= total;
    Candidate cand{MixingMeasure::discrete(d_, std::move(atoms), std::move(w)), ScoreSource::kPerturbation};
    cand.negatable = supported_on(cand.g, g0_);
    return cand;
  }

  template <class U>
  Candidate quadrature_matched(U& u) const {
    const int r = 1 + std::min(3, static_cast<int>(u() * 4));
    std::vector<std::vector<double>> axis_atoms(d_), axis_w(d_);
    for (int l = 0; l < d_; ++l) {
      double a = lo(l) + (hi(l) - lo(l)) * u();
      double b = lo(l) + (hi(l) - lo(l)) * u();
      if (a > b) std::swap(a, b);
      const double minw = 1e-3 * (hi(l) - lo(l));
      if (b - a < minw) {
        b = std::min(hi(l), a + minw);
        a = b - minw;
      }
      const MixingMeasure m = gauss_quadrature_match(MixingMeasure::uniform({a}, {b}, 64), r);
      for (std::size_t j = 0; j < m.size(); ++j) {
        axis_atoms[l].push_back(m.atom(j)[0]);
        axis_w[l].push_back(m.weight(j));
      }
    }
    std::vector<double> atoms, w;
    std::vector<int> idx(d_, 0);
    const int total = static_cast<int>(std::pow(r, d_));
    for (int t = 0; t < total; ++t) {
      int rem = t;
      double wt = 1.0;
      for (int l = d_ - 1; l >= 0; --l) {
        idx[l] = rem % r;
        rem /= r;
      }
      for (int l = 0; l < d_; ++l) {
        atoms.push_back(axis_atoms[l][idx[l]]);
        wt *= axis_w[l][idx[l]];
      }
      w.push_back(wt);
    }
    double s = 0.0;
    for (double v : w) s += v;
    for (double& v : w) v /= s;
    Candidate cand{MixingMeasure::discrete(d_, std::move(atoms), std::move(w)), ScoreSource::kQuadratureMatched};
    cand.negatable = supported_on(cand.g, g0_);
    return cand;
  }

  std::vector<double> ray_point(std::uint64_t t) const {
    if (t < static_cast<std::uint64_t>(J_)) return atoms_[t];
    std::vector<double> theta(d_);
    for (int l = 0; l < d_; ++l)
      theta[l] = lo(l) + (hi(l) - lo(l)) * radical_inverse(t - J_, kPrimes[l % 6]);
    return theta;
  }

  // delta_theta, or g0 with all of atom j's mass moved to theta.
  Candidate extreme_ray(std::uint64_t c) const {
    const std::uint64_t t = c / (J_ + 1);
    const int type = static_cast<int>(c % (J_ + 1));
    const std::vector<double> theta = ray_point(t);
    Candidate cand;
    if (type == 0) {
      cand.g = MixingMeasure::point_mass(theta);
    } else {
      std::vector<double> atoms;
      for (int j = 0; j < J_; ++j) {
        const auto& a = (j == type - 1) ? theta : atoms_[j];
        atoms.insert(atoms.end(), a.begin(), a.end());
      }
      cand.g = MixingMeasure::discrete(d_, std::move(atoms), weights_);
    }
    cand.source = ScoreSource::kExtremeRay;
    cand.generator = true;
    cand.negatable = supported_on(cand.g, g0_);
    return cand;
  }
};

}  // namespace

ScoreDictionary ScoreDictionary::from_scores(Eigen::MatrixXd scores, Eigen::VectorXd half_density) {
  ScoreDictionary d;
  d.scores = std::move(scores);
  d.half_density = std::move(half_density);
  d.provenance.assign(d.size(), ScoreSource::kExplicit);
  d.generator.assign(d.size(), 1);
  d.finalize();
  return d;
}

void ScoreDictionary::finalize() {
  if (scores.rows() == 0) throw InputError("ScoreDictionary: no rows");
  if (scores.cols() != half_density.size()) throw InputError("ScoreDictionary: node count mismatch");
  const Eigen::MatrixXd B = scores * half_density.asDiagonal();
  const Eigen::Index m = B.rows(), N = B.cols();
  if (m >= N) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B.transpose() * B);
    const Eigen::VectorXd& lam = es.eigenvalues();
    const double cut = 1e-12 * lam.maxCoeff();
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < N; ++i) r += lam(i) > cut;
    basis = es.eigenvectors().rightCols(r);
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(B * B.transpose());
    const Eigen::VectorXd& lam = es.eigenvalues();
    const double cut = 1e-12 * lam.maxCoeff();
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < m; ++i) r += lam(i) > cut;
    const Eigen::VectorXd inv_sqrt = lam.tail(r).cwiseSqrt().cwiseInverse();
    basis = B.transpose() * es.eigenvectors().rightCols(r) * inv_sqrt.asDiagonal();
  }
  reduced = B * basis;
  std::vector<Eigen::Index> gen;
  for (Eigen::Index i = 0; i < m; ++i)
    if (generator[static_cast<std::size_t>(i)]) gen.push_back(i);
  generators_t.resize(reduced.cols(), static_cast<Eigen::Index>(gen.size()));
  for (std::size_t k = 0; k < gen.size(); ++k) generators_t.col(static_cast<Eigen::Index>(k)) = reduced.row(gen[k]).transpose();
}

ScoreDictionary build_dictionary(const ParamSpace& space, const MixingMeasure& g0, std::size_t m, std::uint64_t seed) {
  if (!g0.is_discrete()) throw PreconditionError("build_dictionary: g0 must be finitely discrete");
  if (m < 1) throw InputError("build_dictionary: m must be positive");
  g0.validate(space);
  const XQuadrature xq = build_x_quadrature(space, g0);
  const std::size_t N = xq.size();
  ScoreDictionary dict;
  dict.half_density.resize(static_cast<Eigen::Index>(N));
  for (std::size_t k = 0; k < N; ++k)
    dict.half_density(static_cast<Eigen::Index>(k)) = std::sqrt(std::exp(log_mixture_density(space, g0, xq.node(k))) * xq.weights[k]);
  dict.scores.resize(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(N));
  Builder builder(space, g0, seed);
  std::size_t rows = 0;
  std::size_t failures = 0;
  for (std::uint64_t k = 0; rows < m; ++k) {
    Candidate cand = builder.make(k);
    std::vector<double> values;
    try {
      values = ScoreEvaluator(space, cand.g, g0, xq).node_values();
    } catch (const DegenerateDirectionError&) {
      if (++failures > 100 * m) throw InputError("build_dictionary: too many degenerate candidates");
      continue;
    }
    for (int sign : {1, -1}) {
      if (sign < 0 && !cand.negatable) break;
      if (rows >= m) break;
      for (std::size_t c = 0; c < N; ++c) dict.scores(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(c)) = sign * values[c];
      dict.provenance.push_back(cand.source);
      dict.generator.push_back(cand.generator ? 1 : 0);
      ++rows;
    }
  }
  dict.finalize();
  return dict;
}

double gp_sup_draw(const ScoreDictionary& dict, Philox4x32& rng, SupMode mode) {
  const Eigen::Index N = dict.half_density.size();
  Eigen::VectorXd Z(N);
  boost::random::normal_distribution<double> normal;
  for (Eigen::Index k = 0; k < N; ++k) Z(k) = normal(rng);
  const Eigen::VectorXd z = dict.basis.transpose() * Z;
  if (mode == SupMode::kRowMax) {
    const Eigen::VectorXd G = dict.reduced * z;
    const double mx = std::max(0.0, G.maxCoeff());
    return 0.5 * mx * mx;
  }
  if (dict.generators_t.cols() == 0) throw InputError("gp_sup_draw: dictionary has no generator rows");
  const NnlsResult fit = nnls(dict.generators_t, z);
  const Eigen::VectorXd proj = dict.generators_t * fit.x;
  return 0.5 * proj.squaredNorm();
}

std::vector<double> limit_draws(const ScoreDictionary& dict, std::size_t reps, std::uint64_t seed, SupMode mode,
                                int threads) {
  std::vector<double> out(reps);
  parallel_for(reps, threads, [&](std::size_t r) {
    Philox4x32 rng = make_stream(seed, {stream_tag::kLimitDraw, r});
    out[r] = gp_sup_draw(dict, rng, mode);
  });
  return out;
}

LimitQuantiles limit_quantiles(const ParamSpace& space, const MixingMeasure& g0, const LimitOptions& opts,
                               std::uint64_t seed) {
  if (opts.reps < 1) throw InputError("limit_quantiles: reps must be positive");
  LimitQuantiles res;
  const ScoreDictionary dict = build_dictionary(space, g0, opts.m, seed);
  res.rank = dict.rank();
  res.draws = limit_draws(dict, opts.reps, seed, opts.mode, opts.threads);
  res.values = quantiles(res.draws, res.probs);
  if (opts.saturation_check) {
    const ScoreDictionary wide = build_dictionary(space, g0, 2 * opts.m, seed);
    const std::vector<double> draws = limit_draws(wide, opts.reps, seed, opts.mode, opts.threads);
    const double q1 = quantile(res.draws, 0.95);
    const double q2 = quantile(draws, 0.95);
    res.saturation_shift = std::abs(q2 - q1) / std::max(q1, 1e-300);
    res.under_resolved = res.saturation_shift > opts.saturation_threshold;
  }
  return res;
}

}  // namespace mixlrt
