#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace mixlrt {

enum class AxisKind { kGaussian, kPoisson, kBinomial };

/// One coordinate of the parameter box. `trials` is used by binomial axes only.
struct Axis {
  AxisKind kind = AxisKind::kGaussian;
  double lo = 0.0;
  double hi = 1.0;
  int trials = 0;

  bool operator==(const Axis&) const = default;
};

/// Bounded parameter box with a per-axis kernel family.
class ParamSpace {
 public:
  explicit ParamSpace(std::vector<Axis> axes);

  /// d axes, the first b Gaussian and the rest Poisson.
  static ParamSpace gaussian_poisson(int d, int b, const std::vector<std::pair<double, double>>& bounds);
  static ParamSpace gaussian(double lo, double hi);
  static ParamSpace poisson(double lo, double hi);
  static ParamSpace binomial(int trials, double lo, double hi);

  int dim() const { return static_cast<int>(axes_.size()); }
  int gaussian_axes() const;
  const Axis& axis(int l) const { return axes_[l]; }
  const std::vector<Axis>& axes() const { return axes_; }

  bool contains(std::span<const double> theta, double slack = 0.0) const;
  /// Throws DomainError when theta is outside the box.
  void check_theta(std::span<const double> theta) const;
  /// Throws InputError for negative, fractional or out-of-range count coordinates.
  void check_observation(std::span<const double> x) const;

  /// M = sup over the box of the Euclidean distance to theta0.
  double radius_from(std::span<const double> theta0) const;

  /// log p_theta(x) for a single axis; no validation.
  double log_kernel_axis(int l, double theta, double x) const;
  /// log p_theta(x) summed over axes; no validation.
  double log_kernel(std::span<const double> theta, std::span<const double> x) const;
  /// max over the axis range of log p_theta(x).
  double log_kernel_axis_sup(int l, double x) const;

 private:
  std::vector<Axis> axes_;
};

enum class MeasureKind { kDiscrete, kContinuous };

/// Distribution on the parameter box. Continuous measures are carried by a
/// fixed tensor Gauss–Legendre rule; `weights` then hold density times the
/// quadrature weight, so every downstream sum treats both kinds alike.
class MixingMeasure {
 public:
  using Density = std::function<double(std::span<const double>)>;

  static MixingMeasure discrete(int d, std::vector<double> atoms, std::vector<double> weights);
  static MixingMeasure discrete(const std::vector<std::vector<double>>& atoms, std::vector<double> weights);
  static MixingMeasure point_mass(std::vector<double> theta);
  static MixingMeasure continuous(std::vector<double> lo, std::vector<double> hi, Density density,
                                  int nodes_per_axis = 512);
  static MixingMeasure uniform(std::vector<double> lo, std::vector<double> hi, int nodes_per_axis = 512);

  MeasureKind kind() const { return kind_; }
  bool is_discrete() const { return kind_ == MeasureKind::kDiscrete; }
  int dim() const { return d_; }
  std::size_t size() const { return weights_.size(); }
  std::span<const double> atom(std::size_t j) const { return {atoms_.data() + j * d_, static_cast<std::size_t>(d_)}; }
  double weight(std::size_t j) const { return weights_[j]; }
  const std::vector<double>& atoms() const { return atoms_; }
  const std::vector<double>& weights() const { return weights_; }

  /// Box of a continuous measure; empty for discrete ones.
  const std::vector<double>& box_lo() const { return lo_; }
  const std::vector<double>& box_hi() const { return hi_; }
  int nodes_per_axis() const { return nodes_per_axis_; }
  double density(std::span<const double> theta) const;

  /// Number of distinct atom coordinates on axis l; max int for continuous measures.
  int marginal_support_count(int l) const;

  /// Throws InputError/DomainError when weights or atoms are invalid for `space`.
  void validate(const ParamSpace& space) const;

  /// Draw theta using two uniforms per attempt from `next_uniform`.
  void sample_theta(const std::function<double()>& next_uniform, std::span<double> out) const;

 private:
  MeasureKind kind_ = MeasureKind::kDiscrete;
  int d_ = 0;
  std::vector<double> atoms_;
  std::vector<double> weights_;
  std::vector<double> cumulative_;
  std::vector<double> lo_, hi_;
  Density density_;
  double envelope_ = 0.0;
  int nodes_per_axis_ = 0;

  void finish_();
};

/// n observations stored row-major. Count axes hold integral values.
struct Dataset {
  int d = 1;
  std::vector<double> values;
  std::uint64_t master_seed = 0;

  std::size_t n() const { return d > 0 ? values.size() / d : 0; }
  std::span<const double> row(std::size_t i) const { return {values.data() + i * d, static_cast<std::size_t>(d)}; }
};

/// Observation-space quadrature. `edge` marks nodes in the outermost panels
/// (or top counts), used to detect integrands that are not resolved.
struct XQuadrature {
  int d = 1;
  std::vector<double> nodes;
  std::vector<double> weights;
  std::vector<unsigned char> edge;

  std::size_t size() const { return weights.size(); }
  std::span<const double> node(std::size_t m) const { return {nodes.data() + m * d, static_cast<std::size_t>(d)}; }
};

inline constexpr double kLogZero = -std::numeric_limits<double>::infinity();

double kernel_density(const ParamSpace& space, std::span<const double> theta, std::span<const double> x);
double log_mixture_density(const ParamSpace& space, const MixingMeasure& g, std::span<const double> x);
double mixture_density(const ParamSpace& space, const MixingMeasure& g, std::span<const double> x);
/// log f_g at every quadrature node.
std::vector<double> log_mixture_at_nodes(const ParamSpace& space, const MixingMeasure& g, const XQuadrature& xq);

/// Sum of log f_g(X_i); returns kLogZero when some density vanishes.
double log_likelihood(const ParamSpace& space, const MixingMeasure& g, const Dataset& data);

/// theta_i ~ g, X_i ~ p_theta_i. Observation i uses its own stream keyed by
/// (master_seed, i) so the result does not depend on evaluation order.
Dataset sample(const ParamSpace& space, const MixingMeasure& g, std::size_t n, std::uint64_t master_seed);

struct XQuadratureOptions {
  double tol = 1e-10;
  int per_panel = 12;
  int max_panels = 4096;
};

XQuadrature build_x_quadrature(const ParamSpace& space, const MixingMeasure& g0, const XQuadratureOptions& opts = {});

/// Log-sum-exp of a sequence.
double log_sum_exp(std::span<const double> v);

}  // namespace mixlrt
