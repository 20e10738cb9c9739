#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mixlrt/limit_sim.hpp"
#include "mixlrt/model.hpp"
#include "mixlrt/npmle.hpp"

namespace mixlrt {

/// Null mixing distribution as written in a config file.
struct MeasureSpec {
  /// "discrete" or "uniform".
  std::string type = "discrete";
  std::vector<std::vector<double>> atoms;
  std::vector<double> weights;
  std::vector<double> lo, hi;
  int nodes_per_axis = 512;

  MixingMeasure build() const;
  bool operator==(const MeasureSpec&) const = default;
};

struct LimitSpec {
  bool enabled = false;
  std::size_t m = 20000;
  std::size_t reps = 20000;
  /// "conic-hull" or "row-max".
  std::string mode = "conic-hull";
  bool saturation_check = false;

  bool operator==(const LimitSpec&) const = default;
};

inline const std::vector<std::string>& experiment_kinds() {
  static const std::vector<std::string> kinds{"convergence", "divergence-rate", "submodel-chisq",
                                              "finite-support-bound", "cvr-rate", "hartigan",
                                              "limit-compare", "lemma-audit"};
  return kinds;
}

struct ExperimentConfig {
  std::string kind = "convergence";
  std::vector<Axis> axes;
  MeasureSpec g0;
  /// Expansion point; empty selects the first atom of g0 or the box center.
  std::vector<double> theta0;
  std::vector<std::size_t> n_list;
  int replicates = 1;
  std::uint64_t master_seed = 0;
  NpmleOptions solver;
  LimitSpec limit;
  /// Submodel order for submodel-chisq.
  int K = 1;
  /// Number of alternative locations for hartigan, spread over the axis range.
  int hartigan_grid = 401;
  std::string output;

  ParamSpace space() const { return ParamSpace(axes); }
  std::vector<double> expansion_point() const;
  /// Throws ConfigError describing the first invalid field.
  void validate() const;
  bool operator==(const ExperimentConfig&) const = default;
};

struct ResultRow {
  std::size_t n = 0;
  int replicate = 0;
  double statistic = 0.0;
  double gap_bound = 0.0;
  /// ok, nonconverged, bound_violated, lemma_violated or error.
  std::string flag = "ok";
  /// Kind-specific companion value (saturated LRT, lemma bound); not written to the CSV.
  double aux = 0.0;
  std::string message;
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<ResultRow> rows;
  /// JSON summary text (quantiles, diagnostics, config echo).
  std::string summary;

  bool any_nonconverged() const;
  /// Statistics of the rows with the given n, in replicate order.
  std::vector<double> statistics(std::size_t n) const;
};

/// Runs every (n, replicate) pair. Replicate r at n_list[i] draws data from the
/// stream keyed by (master_seed, i, r); output does not depend on `threads`.
ExperimentResult run_experiment(const ExperimentConfig& config, int threads = 1);

/// The fixed-format CSV body.
std::string results_csv(const ExperimentResult& result);
/// Writes <prefix>.csv and <prefix>.json; throws IoError when a file cannot be written.
void write_results(const ExperimentResult& result, const std::string& prefix);

}  // namespace mixlrt
