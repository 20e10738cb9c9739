#include <cmath>

#include "doctest.h"
#include "mixlrt/divergence.hpp"
#include "mixlrt/error.hpp"
#include "mixlrt/rng.hpp"

using namespace mixlrt;

namespace {

MixingMeasure random_discrete(const ParamSpace& sp, int atoms, Philox4x32& rng, const std::vector<double>& first = {}) {
  const int d = sp.dim();
  std::vector<double> a, w;
  double s = 0.0;
  for (int j = 0; j < atoms; ++j) {
    for (int l = 0; l < d; ++l) {
      const Axis& ax = sp.axis(l);
      a.push_back(j == 0 && !first.empty() ? first[l] : ax.lo + (ax.hi - ax.lo) * uniform01(rng));
    }
    w.push_back(0.05 + uniform01(rng));
    s += w.back();
  }
  for (double& v : w) v /= s;
  return MixingMeasure::discrete(d, a, w);
}

// chi^2 by trapezoid on Gaussian axes and plain sums on count axes, independent of build_x_quadrature.
double chi2_oracle(const ParamSpace& sp, const MixingMeasure& g, const MixingMeasure& g0) {
  const int d = sp.dim();
  std::vector<std::vector<double>> pts(d), wts(d);
  for (int l = 0; l < d; ++l) {
    const Axis& ax = sp.axis(l);
    if (ax.kind == AxisKind::kGaussian) {
      const double h = 2e-3, lo = ax.lo - 12, hi = ax.hi + 12;
      for (double x = lo; x <= hi; x += h) {
        pts[l].push_back(x);
        wts[l].push_back(h);
      }
    } else {
      for (int c = 0; c <= 80; ++c) {
        pts[l].push_back(c);
        wts[l].push_back(1.0);
      }
    }
  }
  double s = 0.0;
  std::vector<double> x(d);
  std::vector<std::size_t> idx(d, 0);
  while (true) {
    double w = 1.0;
    for (int l = 0; l < d; ++l) {
      x[l] = pts[l][idx[l]];
      w *= wts[l][idx[l]];
    }
    const double f0 = mixture_density(sp, g0, x);
    const double r = mixture_density(sp, g, x) / f0 - 1;
    s += w * f0 * r * r;
    int p = 0;
    while (p < d && ++idx[p] == pts[p].size()) idx[p++] = 0;
    if (p == d) break;
  }
  return s;
}

std::vector<std::vector<double>> line_points(double lo, double hi, int n) {
  std::vector<std::vector<double>> out;
  for (int i = 0; i < n; ++i) out.push_back({lo + (hi - lo) * i / (n - 1)});
  return out;
}

}  // namespace

TEST_CASE("chi divergence closed forms") {
  const ParamSpace ps = ParamSpace::poisson(0.5, 3);
  const MixingMeasure p1 = MixingMeasure::point_mass({1.0});
  const XQuadrature xp = build_x_quadrature(ps, p1);
  CHECK(chi_divergence(ps, p1, p1, xp) == 0.0);
  CHECK(chi_divergence(ps, MixingMeasure::point_mass({2.0}), p1, xp) == doctest::Approx(std::sqrt(std::exp(1.0) - 1)).epsilon(1e-9));
  CHECK(std::sqrt(std::exp(1.0) - 1) == doctest::Approx(1.3108).epsilon(1e-4));
  const double t0 = 0.7, t1 = 1.6;
  CHECK(chi_divergence(ps, MixingMeasure::point_mass({t1}), MixingMeasure::point_mass({t0}), build_x_quadrature(ps, MixingMeasure::point_mass({t0}))) ==
        doctest::Approx(std::sqrt(std::expm1((t1 - t0) * (t1 - t0) / t0))).epsilon(1e-9));

  const ParamSpace gs = ParamSpace::gaussian(-1, 1);
  for (double th : {0.3, -0.8, 1.0}) {
    const MixingMeasure g0 = MixingMeasure::point_mass({0.1});
    const XQuadrature xq = build_x_quadrature(gs, g0);
    const double want = std::sqrt(std::expm1((th - 0.1) * (th - 0.1)));
    CHECK(chi_divergence(gs, MixingMeasure::point_mass({th}), g0, xq) == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("chi divergence matches an independent quadrature") {
  Philox4x32 rng(71, 0);
  const ParamSpace gs = ParamSpace::gaussian(-0.5, 1);
  for (int rep = 0; rep < 10; ++rep) {
    const MixingMeasure g0 = random_discrete(gs, 1 + rep % 3, rng);
    const MixingMeasure g = random_discrete(gs, 1 + rep % 4, rng);
    const double c = chi_divergence(gs, g, g0, build_x_quadrature(gs, g0));
    CHECK(c * c == doctest::Approx(chi2_oracle(gs, g, g0)).epsilon(1e-6));
  }
}

TEST_CASE("identifiability proxy") {
  Philox4x32 rng(72, 0);
  const ParamSpace sp = ParamSpace::gaussian_poisson(2, 1, {{-0.5, 0.5}, {0.5, 2}});
  for (int rep = 0; rep < 100; ++rep) {
    const MixingMeasure g0 = random_discrete(sp, 1 + rep % 3, rng);
    const MixingMeasure g = random_discrete(sp, 1 + rep % 4, rng);
    const XQuadrature xq = build_x_quadrature(sp, g0);
    CHECK(chi_divergence(sp, g, g0, xq) > 1e-6);
    CHECK(chi_divergence(sp, g0, g0, xq) == 0.0);
  }
}

TEST_CASE("score invariants") {
  Philox4x32 rng(73, 0);
  const ParamSpace sp = ParamSpace::gaussian_poisson(2, 1, {{0, 1}, {0.5, 2}});
  for (int rep = 0; rep < 10; ++rep) {
    const MixingMeasure g0 = random_discrete(sp, 2, rng);
    const MixingMeasure g = random_discrete(sp, 3, rng);
    const XQuadrature xq = build_x_quadrature(sp, g0);
    const ScoreEvaluator s = score(sp, g, g0, xq);
    double m1 = 0.0, m2 = 0.0;
    for (std::size_t m = 0; m < xq.size(); ++m) {
      const double f0 = mixture_density(sp, g0, xq.node(m));
      m1 += xq.weights[m] * f0 * s.node_values()[m];
      m2 += xq.weights[m] * f0 * s.node_values()[m] * s.node_values()[m];
    }
    CHECK(std::abs(m1) < 1e-6);
    CHECK(std::abs(m2 - 1) < 1e-6);
  }
  const MixingMeasure d0 = MixingMeasure::point_mass({0.5, 1.0});
  CHECK_THROWS_AS(score(sp, d0, d0, build_x_quadrature(sp, d0)), DegenerateDirectionError);
}

TEST_CASE("score is constant along mixtures toward g0") {
  const ParamSpace gs = ParamSpace::gaussian(0, 1);
  const std::vector<double> a0{0.2, 0.8}, w0{0.5, 0.5};
  const std::vector<double> a1{0.1, 0.45, 0.9}, w1{0.3, 0.3, 0.4};
  const MixingMeasure g0 = MixingMeasure::discrete(1, a0, w0);
  const XQuadrature xq = build_x_quadrature(gs, g0);
  const auto pts = line_points(-3, 4, 29);
  const ScoreEvaluator ref = score(gs, MixingMeasure::discrete(1, a1, w1), g0, xq);
  for (double t : {0.01, 0.3, 0.77}) {
    std::vector<double> atoms = a0, weights;
    atoms.insert(atoms.end(), a1.begin(), a1.end());
    for (double w : w0) weights.push_back((1 - t) * w);
    for (double w : w1) weights.push_back(t * w);
    const ScoreEvaluator st = score(gs, MixingMeasure::discrete(1, atoms, weights), g0, xq);
    for (const auto& x : pts) CHECK(std::abs(st(x) - ref(x)) < 1e-9);
  }
}

TEST_CASE("taylor gap") {
  const ParamSpace gs = ParamSpace::gaussian(0, 0.5);
  const std::vector<double> t0{0.0};
  const auto pts = line_points(-4, 4, 161);
  for (int K : {1, 4, 10}) CHECK(taylor_gap(gs, MixingMeasure::point_mass({0.0}), t0, K, pts) < 1e-14);
  CHECK(taylor_gap(gs, MixingMeasure::point_mass({0.5}), t0, 12, pts) < 1e-6);

  Philox4x32 rng(74, 0);
  const ParamSpace sp = ParamSpace::gaussian_poisson(2, 1, {{-0.5, 0.5}, {0.5, 1.5}});
  std::vector<std::vector<double>> pts2;
  for (double x = -3; x <= 3; x += 0.5)
    for (int c = 0; c <= 6; ++c) pts2.push_back({x, double(c)});
  for (int rep = 0; rep < 20; ++rep) {
    const MixingMeasure g = random_discrete(sp, 1 + rep % 4, rng);
    const std::vector<double> c0{0.0, 1.0};
    CHECK(taylor_gap(sp, g, c0, 8, pts2) < taylor_gap(sp, g, c0, 2, pts2));
  }
}

TEST_CASE("series score matches the direct score") {
  Philox4x32 rng(75, 0);
  const ParamSpace gs = ParamSpace::gaussian(-0.5, 0.5);
  const auto pts = line_points(-3, 3.5, 27);
  for (int rep = 0; rep < 10; ++rep) {
    const MixingMeasure g0 = random_discrete(gs, 1 + rep % 3, rng);
    const MixingMeasure g = random_discrete(gs, 1 + rep % 4, rng);
    const XQuadrature xq = build_x_quadrature(gs, g0);
    const ScoreEvaluator s = score(gs, g, g0, xq);
    const std::vector<double> series = series_score(gs, g, g0, g0.atom(0), 14, s.chi(), pts);
    for (std::size_t i = 0; i < pts.size(); ++i) CHECK(std::abs(series[i] - s(pts[i])) < 1e-6);
  }
}

TEST_CASE("sandwich examples") {
  const ParamSpace gs = ParamSpace::gaussian(0, 1);
  const MixingMeasure g0 = MixingMeasure::discrete(1, {0.2, 0.8}, {0.3, 0.7});
  const XQuadrature xq = build_x_quadrature(gs, g0);
  const std::vector<double> t0{0.2};
  const SandwichRecord same = den_sandwich(gs, g0, g0, t0, 14, xq);
  CHECK(same.lower == 0.0);
  CHECK(same.chi2 == 0.0);
  CHECK(same.upper - same.remainder == doctest::Approx(0.0));
  CHECK(same.c0 == doctest::Approx(1 / 0.3));
  double sup_ratio = 0.0;
  for (double x = -8; x <= 9; x += 0.01) {
    const std::vector<double> xv{x};
    sup_ratio = std::max(sup_ratio, kernel_density(gs, t0, xv) / mixture_density(gs, g0, xv));
  }
  CHECK(sup_ratio <= same.c0);
  CHECK_THROWS_AS(den_sandwich(gs, g0, g0, std::vector{0.5}, 14, xq), PreconditionError);
}

TEST_CASE("sandwich holds on random pairs") {
  Philox4x32 rng(76, 0);
  const ParamSpace one = ParamSpace::gaussian(-0.5, 0.5);
  const ParamSpace two = ParamSpace::gaussian_poisson(2, 1, {{-0.5, 0.5}, {0.5, 1.5}});
  int held = 0;
  for (int rep = 0; rep < 200; ++rep) {
    const ParamSpace& sp = rep % 2 ? two : one;
    const MixingMeasure g0 = random_discrete(sp, 1 + rep % 3, rng);
    const MixingMeasure g = random_discrete(sp, 1 + (rep / 2) % 4, rng);
    const XQuadrature xq = build_x_quadrature(sp, g0);
    const SandwichRecord r = den_sandwich(sp, g, g0, g0.atom(0), 14, xq);
    if (rep < 20) {
      CHECK(r.chi2 == doctest::Approx(chi2_oracle(sp, g, g0)).epsilon(1e-6));
    }
    CHECK(r.lower <= r.chi2 * (1 + 1e-9));
    CHECK(r.chi2 <= r.upper * (1 + 1e-9));
    held += r.holds;
  }
  CHECK(held == 200);
}
