#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "mixlrt/model.hpp"
#include "mixlrt/orthopoly.hpp"

namespace mixlrt {

/// Symmetric order-k tensor over d axes, stored once per multi-index alpha
/// with |alpha| = k (ordering as in multi_indices_of_order).
class MomentTensor {
 public:
  MomentTensor(int d, int k);

  int dim() const { return d_; }
  int order() const { return k_; }
  std::size_t size() const { return values_.size(); }
  const std::vector<MultiIndex>& indices() const { return indices_; }
  const std::vector<double>& values() const { return values_; }
  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }
  double entry(const MultiIndex& alpha) const;

  /// <T, c^{(x)k}> = sum_alpha (k!/alpha!) T_alpha c^alpha.
  double contract(std::span<const double> c) const;
  /// Gradient of contract() with respect to c.
  void gradient(std::span<const double> c, std::span<double> out) const;
  double max_norm() const;
  double frobenius_norm() const;

  MomentTensor operator-(const MomentTensor& other) const;
  static MomentTensor rank_one(std::span<const double> v, int k);

 private:
  int d_, k_;
  std::vector<MultiIndex> indices_;
  std::vector<double> multinomials_;
  std::vector<double> values_;
};

/// Centered moment int (theta - theta0)^k dg for d = 1.
double moment(const MixingMeasure& g, int k, double theta0);
MomentTensor moment_tensor(const MixingMeasure& g, int k, std::span<const double> theta0);

struct SpectralNormOptions {
  int random_starts = 20;
  int max_iters = 1000;
  double tol = 1e-14;
  std::uint64_t seed = 0x5eed;
};

/// sup over the unit sphere of |<T, c^{(x)k}>| by multistart projected ascent.
double tensor_spectral_norm(const MomentTensor& T, const SpectralNormOptions& opts = {});

/// max_{k = 1..2J} of the spectral norm of m_{k,g} - m_{k,g0}.
double delta_g(const MixingMeasure& g, const MixingMeasure& g0, int J, std::span<const double> theta0);

struct MclRecord {
  int k = 0;
  int J = 0;
  /// True when J equals the number of support points of g0, false when J is larger.
  bool j_is_atom_count = true;
  double lhs = 0.0;
  double delta = 0.0;
  double radius = 0.0;
  double bound = 0.0;
  double stronger_bound = 0.0;
  bool holds = false;
  bool holds_stronger = false;
};

/// Checks |m_k(g) - m_k(g0)| against k (M+1)^{2Jk} Delta and
/// (k-2J)(M+1)^{2J(k-2J)+1} Delta. J <= 0 means the atom count of g0.
/// Throws PreconditionError when k <= 2J, g0 is not discrete, or J is below the atom count.
MclRecord verify_mcl(const ParamSpace& space, const MixingMeasure& g, const MixingMeasure& g0, int k,
                     std::span<const double> theta0, int J = 0);

/// r-atom measure matching the moments 0..2r-1 of a continuous g0 (d = 1),
/// built by Golub–Welsch from the orthonormal recurrence of g0.
MixingMeasure gauss_quadrature_match(const MixingMeasure& g0, int r);

}  // namespace mixlrt
