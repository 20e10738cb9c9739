#include "mixlrt/config_io.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"
#include "mixlrt/error.hpp"

namespace mixlrt {

using nlohmann::json;

namespace {

int line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<int>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

// Line of a dotted field path such as "model.axes[1].kind", found by scanning
// for each key in turn; an index [i] skips to the (i+1)-th following key.
// Returns the line reached so far when a key is absent, 0 when none is found.
int line_of_path(const std::string& text, const std::string& path) {
  std::size_t pos = 0;
  int line = 0;
  int repeat = 1;
  std::size_t i = 0;
  while (i < path.size()) {
    if (path[i] == '.') {
      ++i;
      continue;
    }
    if (path[i] == '[') {
      const std::size_t close = path.find(']', i);
      if (close == std::string::npos) break;
      repeat = 1 + std::atoi(path.substr(i + 1, close - i - 1).c_str());
      i = close + 1;
      continue;
    }
    const std::size_t end = path.find_first_of(".[", i);
    const std::string key = "\"" + path.substr(i, end == std::string::npos ? std::string::npos : end - i) + "\"";
    std::size_t found = pos;
    for (int r = 0; r < repeat && found != std::string::npos; ++r) {
      found = text.find(key, r == 0 ? found : found + 1);
    }
    if (found == std::string::npos) break;
    pos = found;
    line = line_of_offset(text, pos);
    repeat = 1;
    i = end == std::string::npos ? path.size() : end;
  }
  return line;
}

class Reader {
 public:
  explicit Reader(const std::string& text) : text_(text) {}

  [[noreturn]] void fail(const std::string& path, const std::string& msg) const {
    throw ParseError(path + ": " + msg, path, line_of_path(text_, path));
  }

  void only(const json& obj, const std::string& path, std::initializer_list<const char*> keys) const {
    if (!obj.is_object()) fail(path, "expected an object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [k, v] : obj.items())
      if (!allowed.count(k)) fail(path.empty() ? k : path + "." + k, "unknown field");
  }

  template <class T>
  T get(const json& obj, const std::string& path, const char* key) const {
    const std::string full = path.empty() ? key : path + "." + key;
    if (!obj.contains(key)) fail(full, "missing required field");
    return as<T>(obj.at(key), full);
  }

  template <class T>
  T get_or(const json& obj, const std::string& path, const char* key, T fallback) const {
    if (!obj.contains(key)) return fallback;
    return as<T>(obj.at(key), path.empty() ? key : path + "." + key);
  }

  template <class T>
  T as(const json& v, const std::string& path) const {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(path, "expected a boolean");
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(path, "expected a string");
    } else if constexpr (std::is_unsigned_v<T>) {
      if (!v.is_number_unsigned()) fail(path, "expected a non-negative integer");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(path, "expected an integer");
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(path, "expected a number");
    } else {
      if (!v.is_array()) fail(path, "expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i)
        out.push_back(as<typename T::value_type>(v[i], path + "[" + std::to_string(i) + "]"));
      return out;
    }
    return v.get<T>();
  }

 private:
  const std::string& text_;
};

Axis read_axis(const Reader& r, const json& j, const std::string& path) {
  r.only(j, path, {"kind", "lo", "hi", "trials"});
  Axis a;
  const std::string kind = r.get<std::string>(j, path, "kind");
  if (kind == "gaussian") a.kind = AxisKind::kGaussian;
  else if (kind == "poisson") a.kind = AxisKind::kPoisson;
  else if (kind == "binomial") a.kind = AxisKind::kBinomial;
  else r.fail(path + ".kind", "must be gaussian, poisson or binomial");
  a.lo = r.get<double>(j, path, "lo");
  a.hi = r.get<double>(j, path, "hi");
  a.trials = r.get_or<int>(j, path, "trials", 0);
  if (a.kind == AxisKind::kBinomial && a.trials < 1) r.fail(path + ".trials", "binomial axes need trials >= 1");
  return a;
}

const char* axis_name(AxisKind k) {
  switch (k) {
    case AxisKind::kGaussian: return "gaussian";
    case AxisKind::kPoisson: return "poisson";
    default: return "binomial";
  }
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string("malformed JSON: ") + e.what(), "", line_of_offset(text, e.byte > 0 ? e.byte - 1 : 0));
  }
  Reader r(text);
  r.only(root, "", {"kind", "model", "n_list", "replicates", "master_seed", "solver", "limit", "K", "hartigan_grid", "output"});
  ExperimentConfig c;
  c.kind = r.get<std::string>(root, "", "kind");
  const json& model = root.contains("model") ? root.at("model") : (r.fail("model", "missing required field"), root);
  r.only(model, "model", {"axes", "g0", "theta0"});
  if (!model.contains("axes") || !model.at("axes").is_array()) r.fail("model.axes", "expected an array");
  for (std::size_t i = 0; i < model.at("axes").size(); ++i)
    c.axes.push_back(read_axis(r, model.at("axes")[i], "model.axes[" + std::to_string(i) + "]"));
  if (!model.contains("g0")) r.fail("model.g0", "missing required field");
  const json& g0 = model.at("g0");
  r.only(g0, "model.g0", {"type", "atoms", "weights", "lo", "hi", "nodes_per_axis"});
  c.g0.type = r.get<std::string>(g0, "model.g0", "type");
  if (c.g0.type == "discrete") {
    c.g0.atoms = r.get<std::vector<std::vector<double>>>(g0, "model.g0", "atoms");
    c.g0.weights = r.get<std::vector<double>>(g0, "model.g0", "weights");
  } else if (c.g0.type == "uniform") {
    c.g0.lo = r.get<std::vector<double>>(g0, "model.g0", "lo");
    c.g0.hi = r.get<std::vector<double>>(g0, "model.g0", "hi");
    c.g0.nodes_per_axis = r.get_or<int>(g0, "model.g0", "nodes_per_axis", 512);
  } else {
    r.fail("model.g0.type", "must be discrete or uniform");
  }
  c.theta0 = r.get_or<std::vector<double>>(model, "model", "theta0", {});
  c.n_list = r.get<std::vector<std::size_t>>(root, "", "n_list");
  c.replicates = r.get<int>(root, "", "replicates");
  c.master_seed = r.get<std::uint64_t>(root, "", "master_seed");
  if (root.contains("solver")) {
    const json& s = root.at("solver");
    r.only(s, "solver", {"grid_per_axis", "tol_gradient", "max_iters", "refine_rounds"});
    c.solver.grid_per_axis = r.get_or<int>(s, "solver", "grid_per_axis", c.solver.grid_per_axis);
    c.solver.tol_gradient = r.get_or<double>(s, "solver", "tol_gradient", c.solver.tol_gradient);
    c.solver.max_iters = r.get_or<int>(s, "solver", "max_iters", c.solver.max_iters);
    c.solver.refine_rounds = r.get_or<int>(s, "solver", "refine_rounds", c.solver.refine_rounds);
  }
  if (root.contains("limit")) {
    const json& l = root.at("limit");
    r.only(l, "limit", {"enabled", "m", "reps", "mode", "saturation_check"});
    c.limit.enabled = r.get_or<bool>(l, "limit", "enabled", true);
    c.limit.m = r.get_or<std::size_t>(l, "limit", "m", c.limit.m);
    c.limit.reps = r.get_or<std::size_t>(l, "limit", "reps", c.limit.reps);
    c.limit.mode = r.get_or<std::string>(l, "limit", "mode", c.limit.mode);
    c.limit.saturation_check = r.get_or<bool>(l, "limit", "saturation_check", c.limit.saturation_check);
  }
  c.K = r.get_or<int>(root, "", "K", c.K);
  c.hartigan_grid = r.get_or<int>(root, "", "hartigan_grid", c.hartigan_grid);
  c.output = r.get_or<std::string>(root, "", "output", "");
  try {
    c.validate();
  } catch (const ParseError&) {
    throw;
  } catch (const ConfigError& e) {
    const std::string msg = e.what();
    const std::string field = msg.substr(0, msg.find(':'));
    throw ParseError(msg, field, line_of_path(text, field));
  }
  return c;
}

ExperimentConfig read_config(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["kind"] = c.kind;
  json axes = json::array();
  for (const Axis& a : c.axes) {
    json ja{{"kind", axis_name(a.kind)}, {"lo", a.lo}, {"hi", a.hi}};
    if (a.kind == AxisKind::kBinomial) ja["trials"] = a.trials;
    axes.push_back(ja);
  }
  json g0{{"type", c.g0.type}};
  if (c.g0.type == "discrete") {
    g0["atoms"] = c.g0.atoms;
    g0["weights"] = c.g0.weights;
  } else {
    g0["lo"] = c.g0.lo;
    g0["hi"] = c.g0.hi;
    g0["nodes_per_axis"] = c.g0.nodes_per_axis;
  }
  j["model"] = {{"axes", axes}, {"g0", g0}};
  if (!c.theta0.empty()) j["model"]["theta0"] = c.theta0;
  j["n_list"] = c.n_list;
  j["replicates"] = c.replicates;
  j["master_seed"] = c.master_seed;
  j["solver"] = {{"grid_per_axis", c.solver.grid_per_axis},
                 {"tol_gradient", c.solver.tol_gradient},
                 {"max_iters", c.solver.max_iters},
                 {"refine_rounds", c.solver.refine_rounds}};
  j["limit"] = {{"enabled", c.limit.enabled},
                {"m", c.limit.m},
                {"reps", c.limit.reps},
                {"mode", c.limit.mode},
                {"saturation_check", c.limit.saturation_check}};
  j["K"] = c.K;
  j["hartigan_grid"] = c.hartigan_grid;
  j["output"] = c.output;
  return j.dump(2) + "\n";
}

void write_config(const ExperimentConfig& config, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << config_to_json(config);
  if (!f) throw IoError("write to " + path + " failed");
}

}  // namespace mixlrt
