#include <cmath>

#include "doctest.h"
#include "mixlrt/npmle.hpp"
#include "mixlrt/rng.hpp"
#include "npmle_oracle.hpp"

using namespace mixlrt;

namespace {

const double kLogPhi0 = -0.5 * std::log(2 * M_PI);

Dataset from_values(std::vector<double> v) { return Dataset{1, std::move(v), 0}; }

}  // namespace

TEST_CASE("gradient function examples") {
  const ParamSpace gs = ParamSpace::gaussian(-1, 1);
  const Dataset one = from_values({0.7});
  const MixingMeasure d0 = MixingMeasure::point_mass({0.0});
  for (double th : {-1.0, -0.2, 0.0, 0.5, 1.0}) {
    const std::vector<double> t{th};
    const double want = kernel_density(gs, t, std::vector{0.7}) / kernel_density(gs, std::vector{0.0}, std::vector{0.7}) - 1;
    CHECK(gradient_fn(gs, one, d0, t) == doctest::Approx(want).epsilon(1e-12));
  }
  CHECK(gradient_fn(gs, one, d0, std::vector{0.0}) == doctest::Approx(0.0).epsilon(1e-14));
}

TEST_CASE("identical observations give a point mass") {
  const ParamSpace gs = ParamSpace::gaussian(0, 1);
  for (double c : {0.0, 0.37, 1.0}) {
    const Dataset data = from_values(std::vector<double>(50, c));
    const NpmleResult r = npmle_solve(data, gs);
    REQUIRE(r.converged);
    CHECK(r.loglik == doctest::Approx(50 * kLogPhi0).epsilon(1e-9));
    double mean = 0.0;
    for (std::size_t j = 0; j < r.g_hat.size(); ++j) mean += r.g_hat.weight(j) * r.g_hat.atom(j)[0];
    CHECK(mean == doctest::Approx(c).epsilon(1e-4));
  }
}

TEST_CASE("underdispersed counts give a point mass at the sample mean") {
  const ParamSpace ps = ParamSpace::poisson(0.5, 6);
  std::vector<double> v;
  for (int i = 0; i < 40; ++i) v.push_back(i % 2 ? 2.0 : 3.0);
  const Dataset data = from_values(v);
  const NpmleResult r = npmle_solve(data, ps);
  REQUIRE(r.converged);
  const MixingMeasure at_mean = MixingMeasure::point_mass({2.5});
  CHECK(r.loglik >= log_likelihood(ps, at_mean, data) - 1e-9);
  CHECK(r.loglik <= log_likelihood(ps, at_mean, data) + r.gap_bound + 1e-9);
  // D is maximized at the mean and nonpositive elsewhere.
  for (double th = 0.5; th <= 6; th += 0.01) CHECK(gradient_fn(ps, data, at_mean, std::vector{th}) <= 1e-9);
  const auto oracle = testing::grid_npmle_oracle(ps, data, 2201);
  CHECK(oracle.converged);
  CHECK(r.loglik >= oracle.loglik - r.gap_bound - 1e-9 * 40);
}

TEST_CASE("solver invariants on random data") {
  Philox4x32 rng(81, 0);
  for (int rep = 0; rep < 12; ++rep) {
    const bool gauss = rep % 2 == 0;
    const ParamSpace sp = gauss ? ParamSpace::gaussian(-1, 2) : ParamSpace::poisson(0.5, 5);
    const double lo = sp.axis(0).lo, hi = sp.axis(0).hi;
    const MixingMeasure g0 = MixingMeasure::discrete(1, {lo + (hi - lo) * uniform01(rng), lo + (hi - lo) * uniform01(rng)}, {0.4, 0.6});
    const std::size_t n = 20 + static_cast<std::size_t>(uniform01(rng) * 200);
    const Dataset data = sample(sp, g0, n, 500 + rep);
    const NpmleResult r = npmle_solve(data, sp);
    REQUIRE(r.converged);
    CHECK(r.gap_bound >= 0.0);
    CHECK(r.gap_bound <= 1e-6 * n * (1 + 1e-9));
    CHECK(r.g_hat.size() <= n);
    for (std::size_t i = 1; i < r.loglik_history.size(); ++i) CHECK(r.loglik_history[i] >= r.loglik_history[i - 1]);
    CHECK(r.loglik >= log_likelihood(sp, g0, data) - 1e-9 * n);
    CHECK(r.loglik == doctest::Approx(log_likelihood(sp, r.g_hat, data)).epsilon(1e-12));
    // Stationarity at atoms with positive weight.
    for (std::size_t j = 0; j < r.g_hat.size(); ++j) CHECK(std::abs(gradient_fn(sp, data, r.g_hat, r.g_hat.atom(j))) <= 1e-6 * n);
    const auto oracle = testing::grid_npmle_oracle(sp, data, 2048);
    CHECK(oracle.converged);
    CHECK(r.loglik >= oracle.loglik - r.gap_bound - 1e-9 * n);
  }
}

TEST_CASE("tiny samples match the oracle") {
  Philox4x32 rng(82, 0);
  const ParamSpace gs = ParamSpace::gaussian(-2, 2);
  for (int rep = 0; rep < 20; ++rep) {
    const std::size_t n = 1 + rep % 5;
    std::vector<double> v;
    for (std::size_t i = 0; i < n; ++i) v.push_back(-4 + 8 * uniform01(rng));
    const Dataset data = from_values(v);
    const NpmleResult r = npmle_solve(data, gs);
    REQUIRE(r.converged);
    CHECK(r.g_hat.size() <= n);
    const auto oracle = testing::grid_npmle_oracle(gs, data, 4001);
    CHECK(r.loglik >= oracle.loglik - r.gap_bound - 1e-9 * n);
    CHECK(r.loglik <= oracle.loglik + 1e-5);
  }
}

TEST_CASE("two-dimensional solve") {
  const ParamSpace sp = ParamSpace::gaussian_poisson(2, 1, {{0, 1}, {0.5, 3}});
  const MixingMeasure g0 = MixingMeasure::discrete(std::vector<std::vector<double>>{{0.2, 1.0}, {0.8, 2.5}}, {0.5, 0.5});
  const Dataset data = sample(sp, g0, 300, 17);
  const NpmleResult r = npmle_solve(data, sp);
  CHECK(r.converged);
  CHECK(r.gap_bound <= 1e-6 * 300 * (1 + 1e-9));
  CHECK(r.loglik >= log_likelihood(sp, g0, data) - 1e-9);
  for (std::size_t i = 1; i < r.loglik_history.size(); ++i) CHECK(r.loglik_history[i] >= r.loglik_history[i - 1]);
}
