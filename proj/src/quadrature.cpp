#include "mixlrt/quadrature.hpp"

#include <cmath>
#include <numbers>

#include "mixlrt/error.hpp"

namespace mixlrt {

Rule1D gauss_legendre(int n, double a, double b) {
  if (n < 1) throw InputError("gauss_legendre: need at least one node");
  Rule1D rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const int half = (n + 1) / 2;
  const double mid = 0.5 * (a + b);
  const double halfwidth = 0.5 * (b - a);
  for (int i = 0; i < half; ++i) {
    // Tricomi initial guess, then Newton on P_n.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= n; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      const double pn = (n == 1) ? x : p1;
      const double pnm1 = (n == 1) ? 1.0 : p0;
      dp = n * (x * pn - pnm1) / (x * x - 1.0);
      const double dx = pn / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    const double w = 2.0 / ((1.0 - x * x) * dp * dp);
    rule.nodes[i] = mid - halfwidth * x;
    rule.nodes[n - 1 - i] = mid + halfwidth * x;
    rule.weights[i] = halfwidth * w;
    rule.weights[n - 1 - i] = halfwidth * w;
  }
  return rule;
}

Rule1D composite_gauss_legendre(int panels, int per_panel, double a, double b) {
  if (panels < 1) throw InputError("composite_gauss_legendre: need at least one panel");
  const Rule1D base = gauss_legendre(per_panel);
  Rule1D rule;
  rule.nodes.reserve(static_cast<std::size_t>(panels) * per_panel);
  rule.weights.reserve(rule.nodes.capacity());
  const double width = (b - a) / panels;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + p * width;
    for (int i = 0; i < per_panel; ++i) {
      rule.nodes.push_back(lo + 0.5 * width * (base.nodes[i] + 1.0));
      rule.weights.push_back(0.5 * width * base.weights[i]);
    }
  }
  return rule;
}

}  // namespace mixlrt
