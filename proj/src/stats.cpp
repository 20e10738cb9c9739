#include "mixlrt/stats.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>

#include "mixlrt/error.hpp"

namespace mixlrt {

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw InputError("quantile: empty sample");
  if (!(p >= 0.0 && p <= 1.0)) throw InputError("quantile: p outside [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (values.size() - 1) * p;
  const std::size_t lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - lo) * (values[hi] - values[lo]);
}

std::vector<double> quantiles(std::vector<double> values, const std::vector<double>& probs) {
  std::sort(values.begin(), values.end());
  std::vector<double> out;
  for (double p : probs) out.push_back(quantile(values, p));
  return out;
}

double median(std::vector<double> values) { return quantile(std::move(values), 0.5); }

double ks_distance(std::vector<double> a, std::vector<double> b) {
  if (a.empty() || b.empty()) throw InputError("ks_distance: empty sample");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double d = 0.0;
  while (i < a.size() && j < b.size()) {
    const double x = std::min(a[i], b[j]);
    while (i < a.size() && a[i] == x) ++i;
    while (j < b.size() && b[j] == x) ++j;
    d = std::max(d, std::abs(i / na - j / nb));
  }
  return d;
}

double ks_distance(std::vector<double> a, const std::function<double(double)>& cdf) {
  if (a.empty()) throw InputError("ks_distance: empty sample");
  std::sort(a.begin(), a.end());
  const double n = static_cast<double>(a.size());
  double d = 0.0;
  std::size_t i = 0;
  while (i < a.size()) {
    const double x = a[i];
    const double before = i / n;
    while (i < a.size() && a[i] == x) ++i;
    const double F = cdf(x);
    d = std::max({d, std::abs(F - before), std::abs(i / n - F)});
  }
  return d;
}

double chi2_cdf(double df, double x) {
  if (x <= 0.0) return 0.0;
  return boost::math::cdf(boost::math::chi_squared_distribution<double>(df), x);
}

double chi2_quantile(double df, double p) {
  return boost::math::quantile(boost::math::chi_squared_distribution<double>(df), p);
}

double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw InputError("ols_slope: need matching samples of size >= 2");
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= x.size();
  my /= y.size();
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
  }
  return sxy / sxx;
}

}  // namespace mixlrt
