#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "mixlrt/model.hpp"
#include "mixlrt/rng.hpp"

namespace mixlrt {

/// How the supremum over the score set is taken for one Gaussian draw.
enum class SupMode {
  /// Maximum of (G(s))_+ over the dictionary rows.
  kRowMax,
  /// Norm of the projection of the draw onto the convex cone spanned by the
  /// generator rows; the score set generates a convex cone, so this is the
  /// supremum over its closure.
  kConicHull,
};

enum class ScoreSource : int {
  kRandomDiscrete = 0,
  kPerturbation = 1,
  kQuadratureMatched = 2,
  kExtremeRay = 3,
  kExplicit = 4,
};

struct ScoreDictionary {
  /// Score values at quadrature nodes, one row per candidate.
  Eigen::MatrixXd scores;
  /// sqrt(f_g0(x_m) w_m) per node.
  Eigen::VectorXd half_density;
  std::vector<ScoreSource> provenance;
  /// Rows used as cone generators in kConicHull mode.
  std::vector<char> generator;
  /// Orthonormal basis (nodes x r) of the row space of scores * diag(half_density).
  Eigen::MatrixXd basis;
  /// Rows in basis coordinates (m x r).
  Eigen::MatrixXd reduced;
  /// Generator rows in basis coordinates, transposed (r x m_gen).
  Eigen::MatrixXd generators_t;

  std::size_t size() const { return static_cast<std::size_t>(scores.rows()); }
  std::size_t rank() const { return static_cast<std::size_t>(basis.cols()); }

  /// Builds a dictionary from explicit node values; every row is a generator.
  static ScoreDictionary from_scores(Eigen::MatrixXd scores, Eigen::VectorXd half_density);
  /// Recomputes basis/reduced/generators_t from scores and half_density.
  void finalize();
};

/// m candidate scores for a finitely discrete g0. Row k depends only on
/// (seed, k), so a larger m extends a smaller dictionary.
ScoreDictionary build_dictionary(const ParamSpace& space, const MixingMeasure& g0, std::size_t m, std::uint64_t seed);

/// One draw of (1/2) sup_s (G(s))_+^2 with G(s) = sum_m s(x_m) half_density_m Z_m.
double gp_sup_draw(const ScoreDictionary& dict, Philox4x32& rng, SupMode mode = SupMode::kConicHull);

struct LimitQuantiles {
  std::vector<double> probs{0.5, 0.9, 0.95, 0.99};
  std::vector<double> values;
  std::vector<double> draws;
  /// Relative shift of the 0.95 quantile when m is doubled; negative when not computed.
  double saturation_shift = -1.0;
  bool under_resolved = false;
  std::size_t rank = 0;
};

struct LimitOptions {
  std::size_t m = 20000;
  std::size_t reps = 20000;
  SupMode mode = SupMode::kConicHull;
  bool saturation_check = true;
  double saturation_threshold = 0.05;
  int threads = 1;
};

LimitQuantiles limit_quantiles(const ParamSpace& space, const MixingMeasure& g0, const LimitOptions& opts,
                               std::uint64_t seed);

/// Draws reps values from a fixed dictionary; draw r uses stream (seed, r).
std::vector<double> limit_draws(const ScoreDictionary& dict, std::size_t reps, std::uint64_t seed, SupMode mode,
                                int threads = 1);

}  // namespace mixlrt
