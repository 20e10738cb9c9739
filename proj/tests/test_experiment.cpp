#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "mixlrt/config_io.hpp"
#include "mixlrt/error.hpp"
#include "mixlrt/experiment.hpp"

using namespace mixlrt;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

fs::path config_path(const std::string& name) { return fs::path(MIXLRT_CONFIG_DIR) / name; }

fs::path scratch_dir() {
  const fs::path p = fs::temp_directory_path() / ("mixlrt_test_" + std::to_string(::getpid()));
  fs::create_directories(p);
  return p;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(MIXLRT_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

// Parses text expected to fail and returns the error.
ParseError parse_failure(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ParseError& e) {
    return e;
  }
  FAIL("config parsed without error");
  return ParseError("");
}

const char* kBase = R"({
  "kind": "convergence",
  "model": {
    "axes": [{"kind": "gaussian", "lo": 0.0, "hi": 1.0}],
    "g0": {"type": "discrete", "atoms": [[0.5]], "weights": [1.0]}
  },
  "n_list": [50, 100],
  "replicates": 3,
  "master_seed": 7
})";

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const std::size_t pos = s.find(from);
  REQUIRE(pos != std::string::npos);
  return s.replace(pos, from.size(), to);
}

}  // namespace

TEST_CASE("shipped configs round-trip") {
  for (const char* name : {"demo.json", "submodel_chisq.json", "divergence_gaussian.json", "limit_compare.json",
                           "finite_support.json", "hartigan.json"}) {
    CAPTURE(name);
    const ExperimentConfig c = read_config(config_path(name).string());
    CHECK(parse_config(config_to_json(c)) == c);
    const fs::path tmp = scratch_dir() / "roundtrip.json";
    write_config(c, tmp.string());
    CHECK(read_config(tmp.string()) == c);
  }
}

TEST_CASE("config errors name the field and line") {
  const ParseError bad_json = parse_failure("{\n  \"kind\": \"convergence\",\n  \"n_list\": [1, 2,,]\n}");
  CHECK(bad_json.line() == 3);

  const ParseError unknown = parse_failure(replace(kBase, "\"replicates\": 3", "\"replicates\": 3,\n  \"colour\": 1"));
  CHECK(unknown.field() == "colour");
  CHECK(unknown.line() == 9);

  const ParseError order = parse_failure(replace(kBase, "[50, 100]", "[100, 50]"));
  CHECK(order.field() == "n_list");
  CHECK(order.line() == 7);

  const ParseError reps = parse_failure(replace(kBase, "\"replicates\": 3", "\"replicates\": 0"));
  CHECK(reps.field() == "replicates");
  CHECK(reps.line() == 8);

  const ParseError type = parse_failure(replace(kBase, "\"master_seed\": 7", "\"master_seed\": \"seven\""));
  CHECK(type.field() == "master_seed");
  CHECK(type.line() == 9);

  const ParseError axis = parse_failure(replace(kBase, "\"gaussian\"", "\"cauchy\""));
  CHECK(axis.field() == "model.axes[0].kind");
  CHECK(axis.line() == 4);

  const ParseError second = parse_failure(replace(kBase, "\"axes\": [{\"kind\": \"gaussian\", \"lo\": 0.0, \"hi\": 1.0}]",
                                                 "\"axes\": [\n      {\"kind\": \"gaussian\", \"lo\": 0.0, \"hi\": 1.0},\n"
                                                 "      {\"kind\": \"poisson\", \"lo\": \"a\", \"hi\": 1.0}]"));
  CHECK(second.field() == "model.axes[1].lo");
  CHECK(second.line() == 6);

  const ParseError kind = parse_failure(replace(kBase, "\"convergence\"", "\"bootstrap\""));
  CHECK(kind.field() == "kind");
  CHECK(kind.line() == 2);

  const ParseError missing = parse_failure(replace(kBase, "\"master_seed\": 7", "\"output\": \"x\""));
  CHECK(missing.field() == "master_seed");

  CHECK_THROWS_AS(read_config("/nonexistent/config.json"), IoError);
}

TEST_CASE("csv has one row per replicate and a fixed header") {
  ExperimentConfig c = parse_config(kBase);
  const ExperimentResult r = run_experiment(c);
  CHECK(r.rows.size() == 6);
  const std::string csv = results_csv(r);
  CHECK(csv.rfind("kind,n,replicate,statistic,gap_bound,flag\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);
  for (const ResultRow& row : r.rows) {
    CHECK(row.flag == "ok");
    CHECK(row.statistic >= -row.gap_bound);
  }
}

TEST_CASE("results do not depend on the thread count") {
  std::vector<ExperimentConfig> configs;
  configs.push_back(read_config(config_path("demo.json").string()));
  ExperimentConfig sub = read_config(config_path("submodel_chisq.json").string());
  sub.n_list = {300};
  sub.replicates = 10;
  configs.push_back(sub);
  ExperimentConfig lem = parse_config(replace(kBase, "\"convergence\"", "\"lemma-audit\""));
  lem.n_list = {1, 2, 3};
  lem.replicates = 20;
  configs.push_back(lem);
  ExperimentConfig fin = read_config(config_path("finite_support.json").string());
  fin.n_list = {200};
  fin.replicates = 10;
  configs.push_back(fin);
  for (const ExperimentConfig& c : configs) {
    CAPTURE(c.kind);
    const ExperimentResult one = run_experiment(c, 1);
    for (int t : {4, 8}) {
      const ExperimentResult many = run_experiment(c, t);
      CHECK(results_csv(many) == results_csv(one));
      CHECK(many.summary == one.summary);
    }
  }
}

TEST_CASE("adding replicates leaves existing rows unchanged") {
  ExperimentConfig c = parse_config(kBase);
  const ExperimentResult small = run_experiment(c);
  c.replicates = 5;
  const ExperimentResult large = run_experiment(c);
  for (const ResultRow& a : small.rows) {
    bool found = false;
    for (const ResultRow& b : large.rows)
      if (b.n == a.n && b.replicate == a.replicate) {
        found = true;
        CHECK(b.statistic == a.statistic);
        CHECK(b.gap_bound == a.gap_bound);
      }
    CHECK(found);
  }
}

TEST_CASE("demo config matches the golden csv") {
  const ExperimentConfig c = read_config(config_path("demo.json").string());
  const ExperimentResult r = run_experiment(c, 2);
  CHECK(results_csv(r) == slurp(config_path("demo.golden.csv")));
  const fs::path prefix = scratch_dir() / "demo";
  write_results(r, prefix.string());
  CHECK(slurp(prefix.string() + ".csv") == slurp(config_path("demo.golden.csv")));
  CHECK(slurp(prefix.string() + ".json") == r.summary);
  CHECK_THROWS_AS(write_results(r, "/nonexistent/dir/out"), IoError);
}

TEST_CASE("finite support rows respect the saturated bound") {
  ExperimentConfig c = read_config(config_path("finite_support.json").string());
  c.n_list = {100, 400};
  c.replicates = 15;
  const ExperimentResult r = run_experiment(c);
  for (const ResultRow& row : r.rows) {
    CHECK(row.flag == "ok");
    CHECK(2 * row.statistic <= 2 * row.aux + 1e-9);
  }
}

TEST_CASE("hartigan and divergence kinds run") {
  ExperimentConfig h = read_config(config_path("hartigan.json").string());
  h.n_list = {100, 1000};
  h.replicates = 4;
  for (const ResultRow& row : run_experiment(h).rows) {
    CHECK(row.flag == "ok");
    CHECK(row.statistic >= 0.0);
  }
  ExperimentConfig d = read_config(config_path("divergence_gaussian.json").string());
  d.n_list = {100, 400};
  d.replicates = 3;
  const ExperimentResult r = run_experiment(d);
  CHECK(r.rows.size() == 6);
  for (const ResultRow& row : r.rows) CHECK(row.flag == "ok");
}

TEST_CASE("command line exit codes") {
  const fs::path dir = scratch_dir();
  const std::string demo = config_path("demo.json").string();
  CHECK(run_cli("experiment --config " + demo + " --out " + (dir / "cli").string()) == 0);
  CHECK(slurp(dir / "cli.csv") == slurp(config_path("demo.golden.csv")));
  CHECK(run_cli("experiment --config " + demo + " --threads 4 --out " + (dir / "cli4").string()) == 0);
  CHECK(slurp(dir / "cli4.csv") == slurp(config_path("demo.golden.csv")));

  CHECK(run_cli("npmle --config " + demo + " --n 100") == 0);
  CHECK(run_cli("lrt --config " + demo + " --n 100") == 0);
  CHECK(run_cli("lrt --config " + config_path("submodel_chisq.json").string() + " --n 200 --submodel 2") == 0);
  CHECK(run_cli("verify-lemmas --cases 5") == 0);

  ExperimentConfig limited = read_config(demo);
  limited.kind = "limit-compare";
  limited.limit.enabled = true;
  limited.limit.m = 200;
  limited.limit.reps = 500;
  write_config(limited, (dir / "limit.json").string());
  CHECK(run_cli("limit-dist --config " + (dir / "limit.json").string() + " --out " + (dir / "limit.out").string()) == 0);

  ExperimentConfig starved = read_config(demo);
  starved.solver.max_iters = 1;
  write_config(starved, (dir / "starved.json").string());
  CHECK(run_cli("experiment --config " + (dir / "starved.json").string() + " --out " + (dir / "starved").string()) == 2);

  std::ofstream(dir / "broken.json") << "{ \"kind\": ";
  CHECK(run_cli("experiment --config " + (dir / "broken.json").string() + " --out " + (dir / "b").string()) == 1);
  CHECK(run_cli("experiment --config /nonexistent.json --out " + (dir / "b").string()) == 1);
  CHECK(run_cli("experiment --config " + demo + " --out /nonexistent/dir/out") == 1);
  CHECK(run_cli("frobnicate") == 1);
  CHECK(run_cli("") == 1);
  fs::remove_all(dir);
}
