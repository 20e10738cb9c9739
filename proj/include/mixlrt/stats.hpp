#pragma once

#include <functional>
#include <vector>

namespace mixlrt {

/// Linear-interpolation sample quantile (the common "type 7" definition).
double quantile(std::vector<double> values, double p);
std::vector<double> quantiles(std::vector<double> values, const std::vector<double>& probs);
double median(std::vector<double> values);

/// sup_x |F_a(x) - F_b(x)| between two empirical distributions.
double ks_distance(std::vector<double> a, std::vector<double> b);
/// sup_x |F_a(x) - F(x)| against a continuous CDF.
double ks_distance(std::vector<double> a, const std::function<double(double)>& cdf);

double chi2_cdf(double df, double x);
double chi2_quantile(double df, double p);

/// Ordinary least-squares slope of y on x.
double ols_slope(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace mixlrt
