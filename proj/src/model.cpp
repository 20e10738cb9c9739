#include "mixlrt/model.hpp"

#include <algorithm>
#include <boost/random/binomial_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <boost/random/poisson_distribution.hpp>
#include <cmath>
#include <map>
#include <numbers>
#include <string>

#include "mixlrt/error.hpp"
#include "mixlrt/quadrature.hpp"
#include "mixlrt/rng.hpp"

namespace mixlrt {
namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;

bool is_count_axis(const Axis& a) { return a.kind != AxisKind::kGaussian; }

double clamp(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

}  // namespace

double log_sum_exp(std::span<const double> v) {
  double mx = kLogZero;
  for (double x : v) mx = std::max(mx, x);
  if (mx == kLogZero) return kLogZero;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

// ---------------------------------------------------------------- ParamSpace

ParamSpace::ParamSpace(std::vector<Axis> axes) : axes_(std::move(axes)) {
  if (axes_.empty()) throw InputError("ParamSpace: at least one axis is required");
  for (std::size_t l = 0; l < axes_.size(); ++l) {
    const Axis& a = axes_[l];
    if (!(a.lo < a.hi) || !std::isfinite(a.lo) || !std::isfinite(a.hi))
      throw InputError("ParamSpace: axis " + std::to_string(l) + " needs finite lo < hi");
    if (a.kind == AxisKind::kPoisson && !(a.lo > 0.0))
      throw DomainError("ParamSpace: Poisson axis " + std::to_string(l) + " needs lo > 0");
    if (a.kind == AxisKind::kBinomial) {
      if (a.trials < 1) throw InputError("ParamSpace: binomial axis needs trials >= 1");
      if (!(a.lo > 0.0) || !(a.hi < 1.0)) throw DomainError("ParamSpace: binomial axis needs 0 < lo < hi < 1");
    }
  }
}

ParamSpace ParamSpace::gaussian_poisson(int d, int b, const std::vector<std::pair<double, double>>& bounds) {
  if (d < 1 || b < 0 || b > d || static_cast<int>(bounds.size()) != d)
    throw InputError("ParamSpace: need d >= 1, 0 <= b <= d and d bounds");
  std::vector<Axis> axes(d);
  for (int l = 0; l < d; ++l)
    axes[l] = Axis{l < b ? AxisKind::kGaussian : AxisKind::kPoisson, bounds[l].first, bounds[l].second, 0};
  return ParamSpace(std::move(axes));
}

ParamSpace ParamSpace::gaussian(double lo, double hi) { return ParamSpace({Axis{AxisKind::kGaussian, lo, hi, 0}}); }
ParamSpace ParamSpace::poisson(double lo, double hi) { return ParamSpace({Axis{AxisKind::kPoisson, lo, hi, 0}}); }
ParamSpace ParamSpace::binomial(int trials, double lo, double hi) {
  return ParamSpace({Axis{AxisKind::kBinomial, lo, hi, trials}});
}

int ParamSpace::gaussian_axes() const {
  return static_cast<int>(std::count_if(axes_.begin(), axes_.end(), [](const Axis& a) { return a.kind == AxisKind::kGaussian; }));
}

bool ParamSpace::contains(std::span<const double> theta, double slack) const {
  if (theta.size() != axes_.size()) return false;
  for (std::size_t l = 0; l < axes_.size(); ++l) {
    const double s = slack * (axes_[l].hi - axes_[l].lo);
    if (!(theta[l] >= axes_[l].lo - s && theta[l] <= axes_[l].hi + s)) return false;
  }
  return true;
}

void ParamSpace::check_theta(std::span<const double> theta) const {
  if (theta.size() != axes_.size()) throw InputError("theta has the wrong dimension");
  for (std::size_t l = 0; l < axes_.size(); ++l)
    if (!(theta[l] >= axes_[l].lo && theta[l] <= axes_[l].hi))
      throw DomainError("theta[" + std::to_string(l) + "] = " + std::to_string(theta[l]) + " is outside the box");
}

void ParamSpace::check_observation(std::span<const double> x) const {
  if (x.size() != axes_.size()) throw InputError("observation has the wrong dimension");
  for (std::size_t l = 0; l < axes_.size(); ++l) {
    const double v = x[l];
    if (!std::isfinite(v)) throw InputError("observation is not finite");
    if (is_count_axis(axes_[l])) {
      if (v < 0.0 || v != std::floor(v))
        throw InputError("count coordinate " + std::to_string(l) + " must be a nonnegative integer");
      if (axes_[l].kind == AxisKind::kBinomial && v > axes_[l].trials)
        throw InputError("binomial coordinate exceeds the number of trials");
    }
  }
}

double ParamSpace::radius_from(std::span<const double> theta0) const {
  double s = 0.0;
  for (std::size_t l = 0; l < axes_.size(); ++l) {
    const double r = std::max(std::abs(theta0[l] - axes_[l].lo), std::abs(axes_[l].hi - theta0[l]));
    s += r * r;
  }
  return std::sqrt(s);
}

double ParamSpace::log_kernel_axis(int l, double theta, double x) const {
  const Axis& a = axes_[l];
  switch (a.kind) {
    case AxisKind::kGaussian: {
      const double r = x - theta;
      return -0.5 * r * r - kHalfLog2Pi;
    }
    case AxisKind::kPoisson:
      return (x == 0.0 ? 0.0 : x * std::log(theta)) - theta - std::lgamma(x + 1.0);
    case AxisKind::kBinomial: {
      const double n = a.trials;
      return std::lgamma(n + 1.0) - std::lgamma(x + 1.0) - std::lgamma(n - x + 1.0) +
             (x == 0.0 ? 0.0 : x * std::log(theta)) + (x == n ? 0.0 : (n - x) * std::log1p(-theta));
    }
  }
  return kLogZero;
}

double ParamSpace::log_kernel(std::span<const double> theta, std::span<const double> x) const {
  double s = 0.0;
  for (std::size_t l = 0; l < axes_.size(); ++l) s += log_kernel_axis(static_cast<int>(l), theta[l], x[l]);
  return s;
}

double ParamSpace::log_kernel_axis_sup(int l, double x) const {
  const Axis& a = axes_[l];
  double t = x;
  if (a.kind == AxisKind::kBinomial) t = x / a.trials;
  return log_kernel_axis(l, clamp(t, a.lo, a.hi), x);
}

// ------------------------------------------------------------- MixingMeasure

MixingMeasure MixingMeasure::discrete(int d, std::vector<double> atoms, std::vector<double> weights) {
  if (d < 1) throw InputError("MixingMeasure: dimension must be positive");
  if (weights.empty()) throw InputError("MixingMeasure: empty measure");
  if (atoms.size() != weights.size() * static_cast<std::size_t>(d))
    throw InputError("MixingMeasure: atoms and weights disagree in size");
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw InputError("MixingMeasure: weights must be nonnegative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-12) throw InputError("MixingMeasure: weights must sum to 1");
  for (double a : atoms)
    if (!std::isfinite(a)) throw InputError("MixingMeasure: atoms must be finite");
  MixingMeasure g;
  g.kind_ = MeasureKind::kDiscrete;
  g.d_ = d;
  g.atoms_ = std::move(atoms);
  g.weights_ = std::move(weights);
  g.finish_();
  return g;
}

MixingMeasure MixingMeasure::discrete(const std::vector<std::vector<double>>& atoms, std::vector<double> weights) {
  if (atoms.empty()) throw InputError("MixingMeasure: empty measure");
  const int d = static_cast<int>(atoms.front().size());
  std::vector<double> flat;
  for (const auto& a : atoms) {
    if (static_cast<int>(a.size()) != d) throw InputError("MixingMeasure: ragged atoms");
    flat.insert(flat.end(), a.begin(), a.end());
  }
  return discrete(d, std::move(flat), std::move(weights));
}

MixingMeasure MixingMeasure::point_mass(std::vector<double> theta) {
  const int d = static_cast<int>(theta.size());
  return discrete(d, std::move(theta), {1.0});
}

MixingMeasure MixingMeasure::continuous(std::vector<double> lo, std::vector<double> hi, Density density,
                                        int nodes_per_axis) {
  const int d = static_cast<int>(lo.size());
  if (d < 1 || hi.size() != lo.size()) throw InputError("MixingMeasure: box dimension mismatch");
  if (nodes_per_axis < 1) throw InputError("MixingMeasure: nodes_per_axis must be positive");
  std::vector<Rule1D> rules;
  std::size_t total_nodes = 1;
  for (int l = 0; l < d; ++l) {
    if (!(lo[l] < hi[l])) throw InputError("MixingMeasure: continuous box needs lo < hi");
    rules.push_back(gauss_legendre(nodes_per_axis, lo[l], hi[l]));
    total_nodes *= static_cast<std::size_t>(nodes_per_axis);
  }
  MixingMeasure g;
  g.kind_ = MeasureKind::kContinuous;
  g.d_ = d;
  g.atoms_.resize(total_nodes * d);
  g.weights_.resize(total_nodes);
  std::vector<std::size_t> idx(d, 0);
  std::vector<double> theta(d);
  double envelope = 0.0;
  double mass = 0.0;
  for (std::size_t m = 0; m < total_nodes; ++m) {
    double w = 1.0;
    for (int l = 0; l < d; ++l) {
      theta[l] = rules[l].nodes[idx[l]];
      w *= rules[l].weights[idx[l]];
    }
    const double dens = density(theta);
    if (!(dens >= 0.0) || !std::isfinite(dens)) throw InputError("MixingMeasure: density must be finite and >= 0");
    envelope = std::max(envelope, dens);
    std::copy(theta.begin(), theta.end(), g.atoms_.begin() + m * d);
    g.weights_[m] = dens * w;
    mass += dens * w;
    for (int l = d - 1; l >= 0; --l) {
      if (++idx[l] < static_cast<std::size_t>(nodes_per_axis)) break;
      idx[l] = 0;
    }
  }
  if (std::abs(mass - 1.0) > 1e-8) throw InputError("MixingMeasure: density does not integrate to 1");
  g.lo_ = std::move(lo);
  g.hi_ = std::move(hi);
  g.density_ = std::move(density);
  g.envelope_ = 1.25 * envelope;
  g.nodes_per_axis_ = nodes_per_axis;
  g.finish_();
  return g;
}

MixingMeasure MixingMeasure::uniform(std::vector<double> lo, std::vector<double> hi, int nodes_per_axis) {
  double vol = 1.0;
  for (std::size_t l = 0; l < lo.size() && l < hi.size(); ++l) vol *= hi[l] - lo[l];
  const double c = 1.0 / vol;
  return continuous(std::move(lo), std::move(hi), [c](std::span<const double>) { return c; }, nodes_per_axis);
}

void MixingMeasure::finish_() {
  cumulative_.resize(weights_.size());
  double s = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    s += weights_[j];
    cumulative_[j] = s;
  }
}

double MixingMeasure::density(std::span<const double> theta) const {
  if (!density_) throw InputError("MixingMeasure: discrete measures have no density");
  return density_(theta);
}

int MixingMeasure::marginal_support_count(int l) const {
  if (kind_ == MeasureKind::kContinuous) return std::numeric_limits<int>::max();
  std::vector<double> v;
  for (std::size_t j = 0; j < size(); ++j)
    if (weights_[j] > 0.0) v.push_back(atoms_[j * d_ + l]);
  std::sort(v.begin(), v.end());
  return static_cast<int>(std::unique(v.begin(), v.end()) - v.begin());
}

void MixingMeasure::validate(const ParamSpace& space) const {
  if (d_ != space.dim()) throw InputError("MixingMeasure: dimension does not match the parameter space");
  for (std::size_t j = 0; j < size(); ++j) space.check_theta(atom(j));
  if (kind_ == MeasureKind::kContinuous) {
    space.check_theta(lo_);
    space.check_theta(hi_);
  }
}

void MixingMeasure::sample_theta(const std::function<double()>& next_uniform, std::span<double> out) const {
  if (kind_ == MeasureKind::kDiscrete) {
    const double u = next_uniform() * cumulative_.back();
    auto it = std::upper_bound(cumulative_.begin(), cumulative_.end(), u);
    std::size_t j = std::min<std::size_t>(it - cumulative_.begin(), size() - 1);
    while (weights_[j] == 0.0 && j > 0) --j;
    std::copy_n(atoms_.begin() + j * d_, d_, out.begin());
    return;
  }
  for (;;) {
    for (int l = 0; l < d_; ++l) out[l] = lo_[l] + (hi_[l] - lo_[l]) * next_uniform();
    if (next_uniform() * envelope_ <= density_(out)) return;
  }
}

// --------------------------------------------------------------- densities

double kernel_density(const ParamSpace& space, std::span<const double> theta, std::span<const double> x) {
  space.check_theta(theta);
  space.check_observation(x);
  return std::exp(space.log_kernel(theta, x));
}

double log_mixture_density(const ParamSpace& space, const MixingMeasure& g, std::span<const double> x) {
  if (g.size() == 0) throw InputError("mixture_density: empty measure");
  double mx = kLogZero;
  thread_local std::vector<double> terms;
  terms.resize(g.size());
  for (std::size_t j = 0; j < g.size(); ++j) {
    const double w = g.weight(j);
    terms[j] = w > 0.0 ? std::log(w) + space.log_kernel(g.atom(j), x) : kLogZero;
    mx = std::max(mx, terms[j]);
  }
  if (mx == kLogZero) return kLogZero;
  double s = 0.0;
  for (double t : terms) s += std::exp(t - mx);
  return mx + std::log(s);
}

double mixture_density(const ParamSpace& space, const MixingMeasure& g, std::span<const double> x) {
  space.check_observation(x);
  return std::exp(log_mixture_density(space, g, x));
}

std::vector<double> log_mixture_at_nodes(const ParamSpace& space, const MixingMeasure& g, const XQuadrature& xq) {
  std::vector<double> out(xq.size());
  for (std::size_t m = 0; m < xq.size(); ++m) out[m] = log_mixture_density(space, g, xq.node(m));
  return out;
}

double log_likelihood(const ParamSpace& space, const MixingMeasure& g, const Dataset& data) {
  if (data.d != space.dim()) throw InputError("log_likelihood: dataset dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < data.n(); ++i) {
    space.check_observation(data.row(i));
    const double v = log_mixture_density(space, g, data.row(i));
    if (v == kLogZero) return kLogZero;
    s += v;
  }
  return s;
}

Dataset sample(const ParamSpace& space, const MixingMeasure& g, std::size_t n, std::uint64_t master_seed) {
  if (n < 1) throw InputError("sample: n must be at least 1");
  g.validate(space);
  const int d = space.dim();
  Dataset data;
  data.d = d;
  data.master_seed = master_seed;
  data.values.resize(n * d);
  std::vector<double> theta(d);
  for (std::size_t i = 0; i < n; ++i) {
    Philox4x32 rng = make_stream(master_seed, {stream_tag::kSample, i});
    g.sample_theta([&rng] { return uniform01(rng); }, theta);
    for (int l = 0; l < d; ++l) {
      const Axis& a = space.axis(l);
      double x = 0.0;
      switch (a.kind) {
        case AxisKind::kGaussian:
          x = boost::random::normal_distribution<double>(theta[l], 1.0)(rng);
          break;
        case AxisKind::kPoisson:
          x = boost::random::poisson_distribution<int, double>(theta[l])(rng);
          break;
        case AxisKind::kBinomial:
          x = boost::random::binomial_distribution<int, double>(a.trials, theta[l])(rng);
          break;
      }
      data.values[i * d + l] = x;
    }
  }
  return data;
}

// -------------------------------------------------------------- quadrature

namespace {

struct AxisRule {
  std::vector<double> nodes, weights;
  std::vector<unsigned char> edge;
};

// Aggregated marginal of g0 on axis l as (value, weight) pairs.
std::vector<std::pair<double, double>> marginal(const MixingMeasure& g, int l) {
  std::map<double, double> acc;
  for (std::size_t j = 0; j < g.size(); ++j) acc[g.atom(j)[l]] += g.weight(j);
  return {acc.begin(), acc.end()};
}

AxisRule gaussian_axis_rule(const ParamSpace& space, int l, const MixingMeasure& g0, const XQuadratureOptions& opts) {
  const Axis& a = space.axis(l);
  const double width = a.hi - a.lo;
  const double lo = a.lo - width - 10.0;
  const double hi = a.hi + width + 10.0;
  const auto marg = marginal(g0, l);
  auto integrate = [&](const Rule1D& r) {
    double s = 0.0;
    for (std::size_t m = 0; m < r.size(); ++m) {
      double f = 0.0;
      for (const auto& [t, w] : marg) f += w * std::exp(space.log_kernel_axis(l, t, r.nodes[m]));
      s += r.weights[m] * f;
    }
    return s;
  };
  int panels = std::max(1, static_cast<int>(std::ceil(hi - lo)));
  Rule1D rule = composite_gauss_legendre(panels, opts.per_panel, lo, hi);
  double prev = integrate(rule);
  for (;;) {
    if (2 * panels > opts.max_panels) throw ResolutionError("build_x_quadrature: Gaussian axis not resolved");
    Rule1D finer = composite_gauss_legendre(2 * panels, opts.per_panel, lo, hi);
    const double cur = integrate(finer);
    if (std::abs(cur - prev) <= opts.tol && std::abs(prev - 1.0) <= opts.tol) break;
    panels *= 2;
    rule = std::move(finer);
    prev = cur;
  }
  AxisRule out;
  out.nodes = std::move(rule.nodes);
  out.weights = std::move(rule.weights);
  out.edge.assign(out.nodes.size(), 0);
  const std::size_t per = static_cast<std::size_t>(opts.per_panel);
  for (std::size_t m = 0; m < per; ++m) {
    out.edge[m] = 1;
    out.edge[out.nodes.size() - 1 - m] = 1;
  }
  return out;
}

// Smallest k above `rate` with the Chernoff tail bound e^-R (eR/k)^k below eps.
int poisson_cutoff(double rate, double eps) {
  int k = static_cast<int>(std::ceil(rate)) + 1;
  while (-rate + k * (1.0 + std::log(rate / k)) > std::log(eps)) ++k;
  return k;
}

AxisRule count_axis_rule(const ParamSpace& space, int l) {
  const Axis& a = space.axis(l);
  AxisRule out;
  int kmax = a.trials;
  if (a.kind == AxisKind::kPoisson) {
    // Covers the rate hi^2/lo that appears in ratio integrands, not just hi.
    const double rate = std::max(a.hi, a.hi * a.hi / a.lo);
    kmax = poisson_cutoff(rate, 1e-14);
  }
  for (int k = 0; k <= kmax; ++k) {
    out.nodes.push_back(k);
    out.weights.push_back(1.0);
    out.edge.push_back(a.kind == AxisKind::kPoisson && k >= kmax - 1 ? 1 : 0);
  }
  return out;
}

}  // namespace

XQuadrature build_x_quadrature(const ParamSpace& space, const MixingMeasure& g0, const XQuadratureOptions& opts) {
  g0.validate(space);
  const int d = space.dim();
  std::vector<AxisRule> rules;
  for (int l = 0; l < d; ++l)
    rules.push_back(space.axis(l).kind == AxisKind::kGaussian ? gaussian_axis_rule(space, l, g0, opts)
                                                             : count_axis_rule(space, l));
  XQuadrature xq;
  xq.d = d;
  std::size_t total = 1;
  for (const auto& r : rules) total *= r.nodes.size();
  xq.nodes.resize(total * d);
  xq.weights.resize(total);
  xq.edge.resize(total);
  std::vector<std::size_t> idx(d, 0);
  for (std::size_t m = 0; m < total; ++m) {
    double w = 1.0;
    unsigned char e = 0;
    for (int l = 0; l < d; ++l) {
      xq.nodes[m * d + l] = rules[l].nodes[idx[l]];
      w *= rules[l].weights[idx[l]];
      e |= rules[l].edge[idx[l]];
    }
    xq.weights[m] = w;
    xq.edge[m] = e;
    for (int l = d - 1; l >= 0; --l) {
      if (++idx[l] < rules[l].nodes.size()) break;
      idx[l] = 0;
    }
  }
  double mass = 0.0;
  for (std::size_t m = 0; m < total; ++m) mass += xq.weights[m] * std::exp(log_mixture_density(space, g0, xq.node(m)));
  if (std::abs(mass - 1.0) > 1e-8) throw ResolutionError("build_x_quadrature: f_g0 does not integrate to 1");
  return xq;
}

}  // namespace mixlrt
