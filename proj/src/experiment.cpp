#include "mixlrt/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include "json.hpp"
#include "mixlrt/config_io.hpp"
#include "mixlrt/divergence.hpp"
#include "mixlrt/error.hpp"
#include "mixlrt/lrt.hpp"
#include "mixlrt/moments.hpp"
#include "mixlrt/parallel.hpp"
#include "mixlrt/stats.hpp"

namespace mixlrt {

using nlohmann::json;

MixingMeasure MeasureSpec::build() const {
  if (type == "discrete") return MixingMeasure::discrete(atoms, weights);
  if (type == "uniform") return MixingMeasure::uniform(lo, hi, nodes_per_axis);
  throw ConfigError("g0.type must be \"discrete\" or \"uniform\"");
}

std::vector<double> ExperimentConfig::expansion_point() const {
  if (!theta0.empty()) return theta0;
  if (g0.type == "discrete" && !g0.atoms.empty()) return g0.atoms.front();
  std::vector<double> mid;
  for (const Axis& a : axes) mid.push_back(0.5 * (a.lo + a.hi));
  return mid;
}

void ExperimentConfig::validate() const {
  const auto& kinds = experiment_kinds();
  if (std::find(kinds.begin(), kinds.end(), kind) == kinds.end()) throw ConfigError("kind: unknown experiment kind '" + kind + "'");
  if (axes.empty()) throw ConfigError("model.axes: at least one axis required");
  if (n_list.empty()) throw ConfigError("n_list: must not be empty");
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    if (n_list[i] == 0) throw ConfigError("n_list: entries must be positive");
    if (i > 0 && n_list[i] <= n_list[i - 1]) throw ConfigError("n_list: must be strictly increasing");
  }
  if (replicates < 1) throw ConfigError("replicates: must be at least 1");
  const ParamSpace sp = space();
  MixingMeasure g;
  try {
    g = g0.build();
    g.validate(sp);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("model.g0: ") + e.what());
  }
  if (g.dim() != sp.dim()) throw ConfigError("model.g0: dimension does not match the axes");
  if (!theta0.empty()) {
    if (static_cast<int>(theta0.size()) != sp.dim()) throw ConfigError("model.theta0: wrong dimension");
    if (!sp.contains(theta0)) throw ConfigError("model.theta0: outside the parameter box");
  }
  if (kind == "submodel-chisq" && K < 1) throw ConfigError("K: must be at least 1");
  if (kind == "hartigan") {
    if (sp.dim() != 1 || sp.axis(0).kind != AxisKind::kGaussian)
      throw ConfigError("model.axes: hartigan needs a single Gaussian axis");
    if (hartigan_grid < 1) throw ConfigError("hartigan_grid: must be positive");
  }
  if (kind == "finite-support-bound") {
    for (const Axis& a : axes)
      if (a.kind == AxisKind::kGaussian) throw ConfigError("model.axes: finite-support-bound needs count axes with finite support");
    for (const Axis& a : axes)
      if (a.kind == AxisKind::kPoisson) throw ConfigError("model.axes: finite-support-bound needs binomial axes");
  }
  if ((kind == "limit-compare" || limit.enabled) && !g.is_discrete())
    throw ConfigError("limit: the limit law needs a finitely discrete g0");
  if (kind == "limit-compare" && !limit.enabled) throw ConfigError("limit.enabled: required for limit-compare");
  if (limit.mode != "conic-hull" && limit.mode != "row-max") throw ConfigError("limit.mode: must be conic-hull or row-max");
  if (kind == "lemma-audit") {
    if (sp.dim() > 2) throw ConfigError("model.axes: lemma-audit supports d <= 2");
  }
}

bool ExperimentResult::any_nonconverged() const {
  return std::any_of(rows.begin(), rows.end(), [](const ResultRow& r) { return r.flag == "nonconverged"; });
}

std::vector<double> ExperimentResult::statistics(std::size_t n) const {
  std::vector<double> out;
  for (const ResultRow& r : rows)
    if (r.n == n) out.push_back(r.statistic);
  return out;
}

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

struct Context {
  const ExperimentConfig& cfg;
  ParamSpace space;
  MixingMeasure g0;
  std::vector<double> theta0;
  XQuadrature xq;
  std::unique_ptr<SubmodelFamily> family;
  std::vector<double> hartigan_thetas;
};

void lrt_row(const Context& ctx, const Dataset& data, ResultRow& row) {
  const LrtResult r = lrt_full(data, ctx.g0, ctx.space, ctx.cfg.solver);
  row.statistic = r.statistic;
  row.gap_bound = r.gap_bound;
  row.aux = r.alt_loglik;
  if (!r.converged) row.flag = "nonconverged";
}

// Saturated multinomial log-likelihood minus the null log-likelihood.
double saturated_lrt(const Context& ctx, const Dataset& data) {
  std::map<std::vector<double>, std::size_t> counts;
  for (std::size_t i = 0; i < data.n(); ++i) {
    auto x = data.row(i);
    ++counts[std::vector<double>(x.begin(), x.end())];
  }
  const double n = static_cast<double>(data.n());
  double sat = 0.0;
  for (const auto& [x, c] : counts) sat += static_cast<double>(c) * std::log(static_cast<double>(c) / n);
  return sat - log_likelihood(ctx.space, ctx.g0, data);
}

void lemma_row(const Context& ctx, std::size_t n_index, int rep, std::size_t n, ResultRow& row) {
  Philox4x32 rng = make_stream(ctx.cfg.master_seed, {stream_tag::kLemma, n_index, static_cast<std::uint64_t>(rep)});
  auto u = [&rng] { return uniform01(rng); };
  const int d = ctx.space.dim();
  auto point = [&] {
    std::vector<double> t(d);
    for (int l = 0; l < d; ++l) t[l] = ctx.space.axis(l).lo + (ctx.space.axis(l).hi - ctx.space.axis(l).lo) * u();
    return t;
  };
  auto weights = [&](int count) {
    std::vector<double> w(count);
    double s = 0.0;
    for (double& v : w) s += (v = -std::log(1.0 - u()));
    for (double& v : w) v /= s;
    return w;
  };
  const int J = 1 + std::min(2, static_cast<int>(u() * 3));
  std::vector<std::vector<double>> a0;
  for (int j = 0; j < J; ++j) a0.push_back(point());
  const std::vector<double> w0 = weights(J);
  const MixingMeasure g0 = MixingMeasure::discrete(a0, w0);
  MixingMeasure g;
  if (u() < 0.5) {
    const int count = 1 + std::min(2 * J + 2, static_cast<int>(u() * (2 * J + 3)));
    std::vector<std::vector<double>> a;
    for (int j = 0; j < count; ++j) a.push_back(point());
    g = MixingMeasure::discrete(a, weights(count));
  } else {
    const double eps = std::pow(10.0, -3.0 * u());
    std::vector<std::vector<double>> a = a0;
    for (auto& t : a)
      for (int l = 0; l < d; ++l)
        t[l] = std::clamp(t[l] + eps * (2.0 * u() - 1.0), ctx.space.axis(l).lo, ctx.space.axis(l).hi);
    std::vector<double> w = w0;
    double s = 0.0;
    for (double& v : w) s += (v *= std::exp(eps * (2.0 * u() - 1.0)));
    for (double& v : w) v /= s;
    g = MixingMeasure::discrete(a, w);
  }
  const std::vector<double> theta0 = ctx.cfg.theta0.empty() ? point() : ctx.cfg.theta0;
  const MclRecord rec = verify_mcl(ctx.space, g, g0, 2 * J + static_cast<int>(n), theta0);
  row.statistic = rec.bound > 0.0 ? rec.lhs / rec.bound : (rec.lhs > 0.0 ? kNaN : 0.0);
  row.aux = rec.stronger_bound > 0.0 ? rec.lhs / rec.stronger_bound : 0.0;
  if (!rec.holds || !rec.holds_stronger) row.flag = "lemma_violated";
}

void run_row(const Context& ctx, std::size_t n_index, int rep, ResultRow& row) {
  const ExperimentConfig& cfg = ctx.cfg;
  const std::size_t n = cfg.n_list[n_index];
  row.n = n;
  row.replicate = rep;
  if (cfg.kind == "lemma-audit") {
    lemma_row(ctx, n_index, rep, n, row);
    return;
  }
  const std::uint64_t seed = derive_seed(cfg.master_seed, {stream_tag::kReplicate, n_index, static_cast<std::uint64_t>(rep)});
  const Dataset data = sample(ctx.space, ctx.g0, n, seed);
  if (cfg.kind == "convergence" || cfg.kind == "divergence-rate" || cfg.kind == "limit-compare") {
    lrt_row(ctx, data, row);
  } else if (cfg.kind == "finite-support-bound") {
    lrt_row(ctx, data, row);
    const double sat = saturated_lrt(ctx, data);
    const double alt = row.aux;
    row.aux = sat;
    // alt <= saturated loglik exactly; the slack covers rounding in the two sums
    const double slack = 1e-10 * std::max(1.0, std::abs(alt));
    if (row.statistic > sat + slack && row.flag == "ok") row.flag = "bound_violated";
  } else if (cfg.kind == "submodel-chisq") {
    const SubmodelResult r = lrt_submodel(data, *ctx.family);
    row.statistic = r.statistic;
    row.gap_bound = 0.0;
    if (!r.converged) row.flag = "nonconverged";
  } else if (cfg.kind == "cvr-rate") {
    const NpmleResult r = npmle_solve(data, ctx.space, cfg.solver);
    row.statistic = std::sqrt(static_cast<double>(n)) * chi_divergence(ctx.space, r.g_hat, ctx.g0, ctx.xq);
    row.gap_bound = r.gap_bound;
    if (!r.converged) row.flag = "nonconverged";
  } else if (cfg.kind == "hartigan") {
    row.statistic = hartigan_lrt(data, ctx.hartigan_thetas);
    row.gap_bound = 0.0;
  }
}

json quantile_block(const std::vector<double>& v) {
  json q = json::object();
  std::vector<double> finite;
  for (double x : v)
    if (std::isfinite(x)) finite.push_back(x);
  if (finite.empty()) return q;
  for (double p : {0.5, 0.9, 0.95, 0.99}) {
    char key[16];
    std::snprintf(key, sizeof key, "q%.2f", p);
    q[key] = quantile(finite, p);
  }
  return q;
}

std::string summarize(const ExperimentResult& res, const Context& ctx, int threads) {
  const ExperimentConfig& cfg = res.config;
  json s;
  s["config"] = json::parse(config_to_json(cfg));
  s["master_seed"] = cfg.master_seed;
  s["rows"] = res.rows.size();
  json per_n = json::array();
  std::vector<double> medians, gap_medians;
  for (std::size_t n : cfg.n_list) {
    std::vector<double> stats, gaps;
    std::map<std::string, int> flags;
    for (const ResultRow& r : res.rows) {
      if (r.n != n) continue;
      ++flags[r.flag];
      if (!std::isfinite(r.statistic)) continue;
      stats.push_back(r.statistic);
      gaps.push_back(r.gap_bound);
    }
    json e;
    e["n"] = n;
    e["quantiles"] = quantile_block(stats);
    e["flags"] = flags;
    medians.push_back(stats.empty() ? kNaN : median(stats));
    gap_medians.push_back(gaps.empty() ? kNaN : median(gaps));
    e["median"] = medians.back();
    e["median_gap_bound"] = gap_medians.back();
    per_n.push_back(e);
  }
  s["per_n"] = per_n;
  json diag = json::object();
  auto stats_at = [&](std::size_t n) {
    std::vector<double> v;
    for (double x : res.statistics(n))
      if (std::isfinite(x)) v.push_back(x);
    return v;
  };
  if (cfg.kind == "convergence" || cfg.kind == "limit-compare") {
    json ks = json::array();
    for (std::size_t i = 1; i < cfg.n_list.size(); ++i) {
      const auto a = stats_at(cfg.n_list[i - 1]), b = stats_at(cfg.n_list[i]);
      ks.push_back(a.empty() || b.empty() ? kNaN : ks_distance(a, b));
    }
    diag["ks_consecutive_n"] = ks;
    if (cfg.limit.enabled) {
      LimitOptions lo;
      lo.m = cfg.limit.m;
      lo.reps = cfg.limit.reps;
      lo.mode = cfg.limit.mode == "row-max" ? SupMode::kRowMax : SupMode::kConicHull;
      lo.saturation_check = cfg.limit.saturation_check;
      lo.threads = threads;
      const LimitQuantiles lq = limit_quantiles(ctx.space, ctx.g0, lo, cfg.master_seed);
      json lim;
      lim["quantiles"] = quantile_block(lq.draws);
      lim["rank"] = lq.rank;
      lim["saturation_shift"] = lq.saturation_shift;
      lim["under_resolved"] = lq.under_resolved;
      std::vector<double> last;
      for (const ResultRow& r : res.rows)
        if (r.n == cfg.n_list.back() && std::isfinite(r.statistic)) last.push_back(r.statistic - r.gap_bound);
      lim["ks_last_n_gap_subtracted"] = last.empty() ? kNaN : ks_distance(last, lq.draws);
      diag["limit"] = lim;
    }
  } else if (cfg.kind == "divergence-rate" || cfg.kind == "hartigan") {
    bool increasing = true, exceeds = true;
    for (std::size_t i = 1; i < medians.size(); ++i) {
      increasing = increasing && medians[i] > medians[i - 1];
      if (cfg.kind == "divergence-rate") exceeds = exceeds && medians[i] - medians[i - 1] > 3.0 * gap_medians[i];
    }
    diag["median_increasing"] = increasing;
    if (cfg.kind == "divergence-rate") diag["increments_exceed_3x_gap"] = exceeds;
    if (medians.size() >= 2 && std::all_of(medians.begin(), medians.end(), [](double m) { return m > 0.0; })) {
      std::vector<double> logn, loglogn, logm;
      for (std::size_t i = 0; i < medians.size(); ++i) {
        const double n = static_cast<double>(cfg.n_list[i]);
        logn.push_back(std::log(n));
        loglogn.push_back(std::log(std::log(n)));
        logm.push_back(std::log(medians[i]));
      }
      diag["slope_log_median_vs_log_n"] = ols_slope(logn, logm);
      diag["slope_log_median_vs_log_log_n"] = ols_slope(loglogn, logm);
    }
  } else if (cfg.kind == "submodel-chisq") {
    json ks = json::array();
    for (std::size_t n : cfg.n_list) {
      std::vector<double> v = stats_at(n);
      for (double& x : v) x *= 2.0;
      const double K = cfg.K;
      ks.push_back(v.empty() ? kNaN : ks_distance(v, [K](double x) { return chi2_cdf(K, x); }));
    }
    diag["ks_twice_statistic_vs_chi2"] = ks;
    diag["df"] = cfg.K;
  } else if (cfg.kind == "finite-support-bound") {
    int support = 1;
    for (const Axis& a : cfg.axes) support *= a.trials + 1;
    const int df = support - 1;
    diag["df"] = df;
    diag["chi2_q95"] = chi2_quantile(df, 0.95);
    json q95 = json::array();
    for (std::size_t n : cfg.n_list) {
      std::vector<double> v = stats_at(n);
      for (double& x : v) x *= 2.0;
      q95.push_back(v.empty() ? kNaN : quantile(v, 0.95));
    }
    diag["q95_twice_statistic"] = q95;
    diag["bound_violations"] = std::count_if(res.rows.begin(), res.rows.end(),
                                             [](const ResultRow& r) { return r.flag == "bound_violated"; });
  } else if (cfg.kind == "cvr-rate") {
    const auto [mn, mx] = std::minmax_element(medians.begin(), medians.end());
    diag["median_relative_spread"] = (*mx - *mn) / *mn;
  } else if (cfg.kind == "lemma-audit") {
    diag["violations"] = std::count_if(res.rows.begin(), res.rows.end(),
                                       [](const ResultRow& r) { return r.flag == "lemma_violated"; });
  }
  s["diagnostics"] = diag;
  return s.dump(2) + "\n";
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, int threads) {
  config.validate();
  Context ctx{config, config.space(), config.g0.build(), config.expansion_point(), {}, nullptr, {}};
  if (config.kind == "cvr-rate") ctx.xq = build_x_quadrature(ctx.space, ctx.g0);
  if (config.kind == "submodel-chisq") ctx.family = std::make_unique<SubmodelFamily>(ctx.space, ctx.g0, config.K);
  if (config.kind == "hartigan") {
    const Axis& a = ctx.space.axis(0);
    const int m = config.hartigan_grid;
    for (int i = 0; i < m; ++i) ctx.hartigan_thetas.push_back(m == 1 ? a.hi : a.lo + (a.hi - a.lo) * i / (m - 1));
  }
  ExperimentResult res;
  res.config = config;
  const std::size_t reps = static_cast<std::size_t>(config.replicates);
  res.rows.resize(config.n_list.size() * reps);
  parallel_for(res.rows.size(), threads, [&](std::size_t job) {
    ResultRow& row = res.rows[job];
    const std::size_t n_index = job / reps;
    const int rep = static_cast<int>(job % reps);
    row.n = config.n_list[n_index];
    row.replicate = rep;
    try {
      run_row(ctx, n_index, rep, row);
    } catch (const std::exception& e) {
      row.statistic = kNaN;
      row.gap_bound = kNaN;
      row.flag = "error";
      row.message = e.what();
    }
  });
  res.summary = summarize(res, ctx, threads);
  return res;
}

std::string results_csv(const ExperimentResult& result) {
  std::string out = "kind,n,replicate,statistic,gap_bound,flag\n";
  char buf[128];
  for (const ResultRow& r : result.rows) {
    std::snprintf(buf, sizeof buf, ",%zu,%d,%.17g,%.17g,", r.n, r.replicate, r.statistic, r.gap_bound);
    out += result.config.kind;
    out += buf;
    out += r.flag;
    out += '\n';
  }
  return out;
}

void write_results(const ExperimentResult& result, const std::string& prefix) {
  auto put = [](const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open " + path + " for writing");
    f << text;
    if (!f) throw IoError("write to " + path + " failed");
  };
  put(prefix + ".csv", results_csv(result));
  put(prefix + ".json", result.summary);
}

}  // namespace mixlrt
