#pragma once

#include <vector>

namespace mixlrt {

/// One-dimensional quadrature rule.
struct Rule1D {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }
};

/// n-point Gauss–Legendre rule on [a, b].
Rule1D gauss_legendre(int n, double a = -1.0, double b = 1.0);

/// Composite Gauss–Legendre: `panels` equal panels of `per_panel` nodes each.
Rule1D composite_gauss_legendre(int panels, int per_panel, double a, double b);

}  // namespace mixlrt
