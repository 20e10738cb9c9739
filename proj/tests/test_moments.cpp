#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "mixlrt/error.hpp"
#include "mixlrt/moments.hpp"
#include "mixlrt/rng.hpp"

using namespace mixlrt;

namespace {

// <T, c^{(x)k}> summed over every ordered k-tuple of axes.
double dense_contract(const MomentTensor& T, std::span<const double> c) {
  const int d = T.dim(), k = T.order();
  std::vector<int> idx(k, 0);
  double s = 0.0;
  while (true) {
    MultiIndex alpha(d, 0);
    double prod = 1.0;
    for (int i : idx) {
      ++alpha[i];
      prod *= c[i];
    }
    s += T.entry(alpha) * prod;
    int p = 0;
    while (p < k && ++idx[p] == d) idx[p++] = 0;
    if (p == k) break;
  }
  return s;
}

double grid_spectral_norm_2d(const MomentTensor& T) {
  const int steps = 20000;
  double best = 0.0;
  for (int i = 0; i < steps; ++i) {
    const double t = M_PI * i / steps;
    const double c[2] = {std::cos(t), std::sin(t)};
    best = std::max(best, std::abs(dense_contract(T, c)));
  }
  return best;
}

MomentTensor random_tensor(int d, int k, Philox4x32& rng) {
  MomentTensor T(d, k);
  for (std::size_t i = 0; i < T.size(); ++i) T[i] = 2 * uniform01(rng) - 1;
  return T;
}

MixingMeasure random_discrete(int d, int atoms, double lo, double hi, Philox4x32& rng) {
  std::vector<double> a, w;
  double s = 0.0;
  for (int j = 0; j < atoms; ++j) {
    for (int l = 0; l < d; ++l) a.push_back(lo + (hi - lo) * uniform01(rng));
    w.push_back(0.05 + uniform01(rng));
    s += w.back();
  }
  for (double& v : w) v /= s;
  return MixingMeasure::discrete(d, a, w);
}

}  // namespace

TEST_CASE("moment examples") {
  const MixingMeasure g = MixingMeasure::discrete(1, {0.1, 0.7}, {0.4, 0.6});
  CHECK(moment(g, 0, 0.3) == doctest::Approx(1.0));
  CHECK(moment(MixingMeasure::point_mass({0.4}), 3, 0.4) == 0.0);
  CHECK(moment(MixingMeasure::uniform({0}, {1}), 2, 0.0) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  CHECK(moment(g, 1, 0.0) == doctest::Approx(0.46));
  const MomentTensor t = moment_tensor(MixingMeasure::point_mass({1.0, 2.0}), 2, std::vector{0.0, 0.0});
  CHECK(t.entry({2, 0}) == doctest::Approx(1.0));
  CHECK(t.entry({1, 1}) == doctest::Approx(2.0));
  CHECK(t.entry({0, 2}) == doctest::Approx(4.0));
}

TEST_CASE("spectral norm examples") {
  MomentTensor s(1, 3);
  s[0] = -3;
  CHECK(tensor_spectral_norm(s) == doctest::Approx(3.0));
  const std::vector<double> v{0.6, -1.2, 0.4};
  const double nv = std::sqrt(0.36 + 1.44 + 0.16);
  for (int k = 1; k <= 5; ++k) CHECK(tensor_spectral_norm(MomentTensor::rank_one(v, k)) == doctest::Approx(std::pow(nv, k)).epsilon(1e-9));
  MomentTensor diag(2, 2);
  for (std::size_t i = 0; i < diag.size(); ++i) {
    const auto& a = diag.indices()[i];
    diag[i] = a == MultiIndex{2, 0} ? 1.0 : a == MultiIndex{0, 2} ? 2.0 : 0.0;
  }
  CHECK(tensor_spectral_norm(diag) == doctest::Approx(2.0).epsilon(1e-10));
}

TEST_CASE("contract and gradient agree with the dense expansion") {
  Philox4x32 rng(31, 0);
  for (int rep = 0; rep < 30; ++rep) {
    const int d = 1 + rep % 3, k = 1 + rep % 5;
    const MomentTensor T = random_tensor(d, k, rng);
    std::vector<double> c(d), g(d);
    for (double& x : c) x = 2 * uniform01(rng) - 1;
    CHECK(T.contract(c) == doctest::Approx(dense_contract(T, c)).epsilon(1e-12));
    T.gradient(c, g);
    for (int l = 0; l < d; ++l) {
      std::vector<double> cp = c, cm = c;
      cp[l] += 1e-6;
      cm[l] -= 1e-6;
      CHECK(std::abs(g[l] - (T.contract(cp) - T.contract(cm)) / 2e-6) < 1e-6);
    }
  }
}

TEST_CASE("spectral norm matches a fine sphere grid in two dimensions") {
  Philox4x32 rng(41, 0);
  for (int k = 1; k <= 4; ++k)
    for (int rep = 0; rep < 10; ++rep) {
      const MomentTensor T = random_tensor(2, k, rng);
      CHECK(std::abs(tensor_spectral_norm(T) - grid_spectral_norm_2d(T)) < 1e-4);
    }
}

TEST_CASE("norm chain") {
  Philox4x32 rng(51, 0);
  for (int rep = 0; rep < 200; ++rep) {
    const int d = 1 + rep % 3, k = 1 + (rep / 3) % 5;
    const MomentTensor T = random_tensor(d, k, rng);
    const double inf = T.max_norm(), two = tensor_spectral_norm(T), fro = T.frobenius_norm();
    CHECK(inf <= two * (1 + 1e-9));
    CHECK(two <= fro * (1 + 1e-9));
    CHECK(fro <= std::pow(d, k / 2.0) * inf * (1 + 1e-12));
  }
}

TEST_CASE("delta_g examples") {
  const std::vector<double> t0{0.0};
  const MixingMeasure d0 = MixingMeasure::point_mass({0.0});
  CHECK(delta_g(d0, d0, 1, t0) == 0.0);
  CHECK(delta_g(MixingMeasure::point_mass({1.0}), d0, 1, t0) == doctest::Approx(1.0));
  CHECK(delta_g(MixingMeasure::discrete(1, {-1.0, 1.0}, {0.5, 0.5}), d0, 1, t0) == doctest::Approx(1.0));
}

TEST_CASE("moment comparison examples") {
  const ParamSpace sp = ParamSpace::gaussian(-1, 1);
  const std::vector<double> t0{0.0};
  const MixingMeasure d0 = MixingMeasure::point_mass({0.0});
  const MclRecord r = verify_mcl(sp, MixingMeasure::point_mass({1.0}), d0, 3, t0);
  CHECK(r.lhs == doctest::Approx(1.0));
  CHECK(r.bound == doctest::Approx(192.0));
  CHECK(r.stronger_bound == doctest::Approx(8.0));
  CHECK(r.holds);
  CHECK(r.holds_stronger);
  CHECK(r.j_is_atom_count);
  const MclRecord same = verify_mcl(sp, d0, d0, 3, t0);
  CHECK(same.lhs == 0.0);
  CHECK(same.holds);
  CHECK_THROWS_AS(verify_mcl(sp, d0, d0, 2, t0), PreconditionError);
  CHECK_THROWS_AS(verify_mcl(sp, d0, MixingMeasure::uniform({-1}, {1}), 3, t0), PreconditionError);
  const MclRecord larger = verify_mcl(sp, MixingMeasure::point_mass({1.0}), d0, 5, t0, 2);
  CHECK_FALSE(larger.j_is_atom_count);
  CHECK(larger.holds);
}

TEST_CASE("moment comparison bounds hold on random cases") {
  Philox4x32 rng(61, 0);
  int cases = 0;
  for (int rep = 0; rep < 1000; ++rep) {
    const int d = 1 + rep % 2;
    const int J = 1 + (rep / 2) % 3;
    const int k = 2 * J + 1 + static_cast<int>(uniform01(rng) * 6);
    std::vector<Axis> axes(d, Axis{AxisKind::kGaussian, -1.0, 1.0, 0});
    const ParamSpace sp(axes);
    const MixingMeasure g0 = random_discrete(d, J, -1, 1, rng);
    const int atoms = 1 + static_cast<int>(uniform01(rng) * (2 * J + 3));
    const MixingMeasure g = random_discrete(d, atoms, -1, 1, rng);
    const MclRecord r = verify_mcl(sp, g, g0, k, g0.atom(0));
    CHECK(r.holds);
    CHECK(r.holds_stronger);
    ++cases;
  }
  CHECK(cases == 1000);
}

TEST_CASE("gauss quadrature matching on the uniform distribution") {
  const MixingMeasure u = MixingMeasure::uniform({0}, {1});
  const MixingMeasure one = gauss_quadrature_match(u, 1);
  REQUIRE(one.size() == 1);
  CHECK(one.atom(0)[0] == doctest::Approx(0.5).epsilon(1e-12));
  const MixingMeasure two = gauss_quadrature_match(u, 2);
  REQUIRE(two.size() == 2);
  std::vector<double> a{two.atom(0)[0], two.atom(1)[0]};
  std::sort(a.begin(), a.end());
  CHECK(a[0] == doctest::Approx(0.5 - 0.5 / std::sqrt(3.0)).epsilon(1e-10));
  CHECK(a[1] == doctest::Approx(0.5 + 0.5 / std::sqrt(3.0)).epsilon(1e-10));
  CHECK(two.weight(0) == doctest::Approx(0.5).epsilon(1e-10));

  for (int r = 1; r <= 5; ++r) {
    const MixingMeasure q = gauss_quadrature_match(u, r);
    for (int k = 0; k < 2 * r; ++k) CHECK(std::abs(moment(q, k, 0.3) - moment(u, k, 0.3)) < 1e-8);
    // Squared norm of the monic Legendre polynomial of degree r on [0, 1].
    const double f = std::tgamma(r + 1.0), f2 = std::tgamma(2 * r + 1.0);
    const double want = std::pow(f, 4) / (f2 * f2 * (2 * r + 1));
    const double diff = moment(u, 2 * r, 0.3) - moment(q, 2 * r, 0.3);
    CHECK(diff == doctest::Approx(want).epsilon(1e-6));
    CHECK(diff > 1e-7);
  }
  CHECK_THROWS_AS(gauss_quadrature_match(MixingMeasure::point_mass({0.5}), 1), PreconditionError);
}
