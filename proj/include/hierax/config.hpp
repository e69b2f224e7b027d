#pragma once

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hierax/closed_loop.hpp"
#include "hierax/rprop.hpp"

namespace hierax {

/// Anything wrong with a configuration document: syntax, an unknown key, a
/// value of the wrong type or range. Distinct from runtime failures so the
/// command line can map it to its own exit status.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {

/// Strict-object view: every key must be consumed by the parser, and
/// whatever is left over is reported by its full dotted path. Misspelled
/// keys fail loudly instead of silently keeping a default.
class StrictView {
 public:
  StrictView(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(path_ + ": expected an object");
  }

  const nlohmann::json* take(const std::string& key) {
    seen_.insert(key);
    const auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (seen_.count(it.key()) == 0) {
        throw ConfigError("unknown key \"" + path_ + "." + it.key() + "\"");
      }
    }
  }

  const std::string& path() const { return path_; }

 private:
  const nlohmann::json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void read_value(const nlohmann::json& j, const std::string& path, double& dst) {
  if (!j.is_number()) throw ConfigError(path + ": expected a number");
  dst = j.get<double>();
}

inline void read_value(const nlohmann::json& j, const std::string& path, int& dst) {
  if (!j.is_number_integer()) throw ConfigError(path + ": expected an integer");
  dst = j.get<int>();
}

inline void read_value(const nlohmann::json& j, const std::string& path, long& dst) {
  if (!j.is_number_integer()) throw ConfigError(path + ": expected an integer");
  dst = j.get<long>();
}

inline void read_value(const nlohmann::json& j, const std::string& path, std::uint64_t& dst) {
  if (!j.is_number_unsigned()) throw ConfigError(path + ": expected a non-negative integer");
  dst = j.get<std::uint64_t>();
}

inline void read_value(const nlohmann::json& j, const std::string& path, bool& dst) {
  if (!j.is_boolean()) throw ConfigError(path + ": expected a boolean");
  dst = j.get<bool>();
}

inline void read_value(const nlohmann::json& j, const std::string& path, std::string& dst) {
  if (!j.is_string()) throw ConfigError(path + ": expected a string");
  dst = j.get<std::string>();
}

inline void read_value(const nlohmann::json& j, const std::string& path,
                       std::vector<double>& dst) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array of numbers");
  dst.clear();
  for (const auto& e : j) {
    if (!e.is_number()) throw ConfigError(path + ": expected an array of numbers");
    dst.push_back(e.get<double>());
  }
}

inline void read_value(const nlohmann::json& j, const std::string& path, std::vector<int>& dst) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array of integers");
  dst.clear();
  for (const auto& e : j) {
    if (!e.is_number_integer()) throw ConfigError(path + ": expected an array of integers");
    dst.push_back(e.get<int>());
  }
}

template <class T>
void assign(StrictView& v, const std::string& key, T& dst) {
  if (const nlohmann::json* j = v.take(key)) read_value(*j, v.path() + "." + key, dst);
}

inline SignalSpec parse_signal(const nlohmann::json& j, const std::string& path) {
  StrictView v(j, path);
  std::string kind = "constant";
  assign(v, "kind", kind);
  SignalSpec s;
  if (kind == "constant") {
    assign(v, "value", s.value);
  } else if (kind == "prbs") {
    s.kind = SignalSpec::Kind::prbs;
    assign(v, "lo", s.lo);
    assign(v, "hi", s.hi);
    assign(v, "hold_min", s.hold_min);
    assign(v, "hold_max", s.hold_max);
  } else if (kind == "sequence") {
    s.kind = SignalSpec::Kind::sequence;
    assign(v, "values", s.values);
    if (s.values.empty()) throw ConfigError(path + ".values: sequence must be nonempty");
  } else {
    throw ConfigError(path + ".kind: must be \"constant\", \"prbs\" or \"sequence\"");
  }
  v.finish();
  return s;
}

inline nlohmann::json signal_to_json(const SignalSpec& s) {
  nlohmann::json j;
  switch (s.kind) {
    case SignalSpec::Kind::constant:
      j["kind"] = "constant";
      j["value"] = s.value;
      break;
    case SignalSpec::Kind::prbs:
      j["kind"] = "prbs";
      j["lo"] = s.lo;
      j["hi"] = s.hi;
      j["hold_min"] = s.hold_min;
      j["hold_max"] = s.hold_max;
      break;
    case SignalSpec::Kind::sequence:
      j["kind"] = "sequence";
      j["values"] = s.values;
      break;
  }
  return j;
}

inline void parse_signal_list(const nlohmann::json& j, const std::string& path,
                              std::vector<SignalSpec>& dst) {
  if (!j.is_array()) throw ConfigError(path + ": expected an array of signal objects");
  dst.clear();
  for (std::size_t i = 0; i < j.size(); ++i) {
    dst.push_back(parse_signal(j[i], path + "[" + std::to_string(i) + "]"));
  }
}

inline void parse_params(const nlohmann::json& j, const std::string& path, BenchmarkParams& p) {
  StrictView v(j, path);
  assign(v, "coupling_gain", p.coupling_gain);
  assign(v, "nonlin_strength", p.nonlin_strength);
  assign(v, "pole_scale", p.pole_scale);
  assign(v, "mismatch", p.mismatch);
  v.finish();
}

inline nlohmann::json params_to_json(const BenchmarkParams& p) {
  return {{"coupling_gain", p.coupling_gain},
          {"nonlin_strength", p.nonlin_strength},
          {"pole_scale", p.pole_scale},
          {"mismatch", p.mismatch}};
}

inline void parse_solver(const nlohmann::json& j, const std::string& path, SolverConfig& c) {
  StrictView v(j, path);
  assign(v, "n_max", c.n_max);
  assign(v, "n_rstr", c.n_rstr);
  assign(v, "momentum", c.momentum);
  assign(v, "gamma0", c.gamma0);
  assign(v, "gamma_min", c.gamma_min);
  assign(v, "gamma_max", c.gamma_max);
  assign(v, "pg_tol", c.pg_tol);
  v.finish();
}

inline nlohmann::json solver_to_json(const SolverConfig& c) {
  return {{"n_max", c.n_max},       {"n_rstr", c.n_rstr},       {"momentum", c.momentum},
          {"gamma0", c.gamma0},     {"gamma_min", c.gamma_min}, {"gamma_max", c.gamma_max},
          {"pg_tol", c.pg_tol}};
}

inline void parse_oracle(const nlohmann::json& j, const std::string& path, OracleConfig& c) {
  StrictView v(j, path);
  assign(v, "tol", c.tol);
  assign(v, "max_iterations", c.max_iterations);
  assign(v, "armijo_c", c.armijo_c);
  assign(v, "max_backtracks", c.max_backtracks);
  v.finish();
}

inline nlohmann::json oracle_to_json(const OracleConfig& c) {
  return {{"tol", c.tol},
          {"max_iterations", c.max_iterations},
          {"armijo_c", c.armijo_c},
          {"max_backtracks", c.max_backtracks}};
}

inline void parse_fixed_point(const nlohmann::json& j, const std::string& path,
                              FixedPointConfig& c) {
  StrictView v(j, path);
  assign(v, "sigma_max", c.sigma_max);
  assign(v, "eps_tol", c.eps_tol);
  assign(v, "alpha", c.alpha);
  v.finish();
}

inline nlohmann::json fixed_point_to_json(const FixedPointConfig& c) {
  return {{"sigma_max", c.sigma_max}, {"eps_tol", c.eps_tol}, {"alpha", c.alpha}};
}

inline void parse_search(const nlohmann::json& j, const std::string& path, CompassConfig& c) {
  StrictView v(j, path);
  assign(v, "budget", c.budget);
  assign(v, "initial_step_frac", c.initial_step_frac);
  assign(v, "shrink", c.shrink);
  assign(v, "min_step_frac", c.min_step_frac);
  v.finish();
}

inline nlohmann::json search_to_json(const CompassConfig& c) {
  return {{"budget", c.budget},
          {"initial_step_frac", c.initial_step_frac},
          {"shrink", c.shrink},
          {"min_step_frac", c.min_step_frac}};
}

inline void parse_rprop(const nlohmann::json& j, const std::string& path, RpropConfig& c) {
  StrictView v(j, path);
  assign(v, "eta_plus", c.eta_plus);
  assign(v, "eta_minus", c.eta_minus);
  assign(v, "delta0", c.delta0);
  assign(v, "delta_min", c.delta_min);
  assign(v, "delta_max", c.delta_max);
  assign(v, "epochs", c.epochs);
  assign(v, "val_fraction", c.val_fraction);
  assign(v, "seed", c.seed);
  assign(v, "loss_scale", c.loss_scale);
  v.finish();
}

inline nlohmann::json rprop_to_json(const RpropConfig& c) {
  return {{"eta_plus", c.eta_plus},   {"eta_minus", c.eta_minus},
          {"delta0", c.delta0},       {"delta_min", c.delta_min},
          {"delta_max", c.delta_max}, {"epochs", c.epochs},
          {"val_fraction", c.val_fraction}, {"seed", c.seed},
          {"loss_scale", c.loss_scale}};
}

}  // namespace detail

/// A scenario plus the surrogate model files it references; the files are
/// loaded separately (load_surrogate_models) so parsing a document never
/// touches the filesystem.
struct ParsedScenario {
  ScenarioConfig scenario;
  std::map<int, std::string> surrogate_paths;
};

/// The solver-study and closed-loop-study settings of the `bench` command.
/// `scenarios` are overlays: each entry starts from the document's base
/// scenario and overrides what it names.
struct BenchSection {
  int n_instances = 100;
  std::uint64_t dataset_seed = 42;
  double min_activity = 1e-4;
  double assert_j_bar_max = 0.0;  // 0 = no assertion wired
  std::vector<ParsedScenario> scenarios;
};

/// Everything a command can pull out of one configuration document.
struct RunConfig {
  ParsedScenario base;
  std::vector<int> hidden_layers = {25, 25};
  RpropConfig rprop;
  BenchSection bench;
};

namespace detail {

inline ParsedScenario parse_scenario(const nlohmann::json& j, const std::string& path,
                                     ParsedScenario base) {
  StrictView v(j, path);
  ScenarioConfig& sc = base.scenario;
  assign(v, "horizon", sc.horizon);
  assign(v, "t_s", sc.t_s);
  assign(v, "tau_u", sc.tau_u);
  assign(v, "n_sim", sc.n_sim);
  assign(v, "seed", sc.seed);
  assign(v, "warm_start", sc.warm_start);
  assign(v, "optimize_setpoints", sc.optimize_setpoints);
  assign(v, "divergence_bound", sc.divergence_bound);

  if (const nlohmann::json* c = v.take("controller")) {
    std::string name;
    read_value(*c, v.path() + ".controller", name);
    if (name == "exact") {
      sc.controller = ControllerKind::exact;
    } else if (name == "truncated") {
      sc.controller = ControllerKind::truncated;
    } else if (name == "surrogate") {
      sc.controller = ControllerKind::surrogate;
    } else {
      throw ConfigError(v.path() +
                        ".controller: must be \"exact\", \"truncated\" or \"surrogate\"");
    }
  }

  if (const nlohmann::json* p = v.take("model_params")) {
    parse_params(*p, v.path() + ".model_params", sc.model_params);
  }
  if (const nlohmann::json* p = v.take("plant_params")) {
    parse_params(*p, v.path() + ".plant_params", sc.plant_params);
  }
  if (const nlohmann::json* p = v.take("solver")) parse_solver(*p, v.path() + ".solver", sc.solver);
  if (const nlohmann::json* p = v.take("oracle")) parse_oracle(*p, v.path() + ".oracle", sc.oracle);
  if (const nlohmann::json* p = v.take("fixed_point")) {
    parse_fixed_point(*p, v.path() + ".fixed_point", sc.fixed_point);
  }
  if (const nlohmann::json* p = v.take("setpoint_search")) {
    parse_search(*p, v.path() + ".setpoint_search", sc.setpoint_search);
  }
  if (const nlohmann::json* p = v.take("setpoints")) {
    parse_signal_list(*p, v.path() + ".setpoints", sc.setpoints);
  }
  if (const nlohmann::json* p = v.take("disturbances")) {
    parse_signal_list(*p, v.path() + ".disturbances", sc.disturbances);
  }
  if (const nlohmann::json* p = v.take("x0")) {
    if (!p->is_array()) throw ConfigError(v.path() + ".x0: expected an array of state arrays");
    sc.x0.clear();
    for (std::size_t i = 0; i < p->size(); ++i) {
      std::vector<double> vals;
      read_value((*p)[i], v.path() + ".x0[" + std::to_string(i) + "]", vals);
      Eigen::VectorXd x(static_cast<Eigen::Index>(vals.size()));
      for (std::size_t k = 0; k < vals.size(); ++k) x[static_cast<Eigen::Index>(k)] = vals[k];
      sc.x0.push_back(std::move(x));
    }
  }
  if (const nlohmann::json* p = v.take("surrogate_models")) {
    StrictView m(*p, v.path() + ".surrogate_models");
    base.surrogate_paths.clear();
    for (auto it = p->begin(); it != p->end(); ++it) {
      int sub = 0;
      try {
        std::size_t used = 0;
        sub = std::stoi(it.key(), &used);
        if (used != it.key().size()) throw std::invalid_argument("trailing junk");
      } catch (const std::exception&) {
        throw ConfigError(v.path() + ".surrogate_models: keys must be subsystem indices");
      }
      std::string model_path;
      read_value(*m.take(it.key()), v.path() + ".surrogate_models." + it.key(), model_path);
      base.surrogate_paths[sub] = model_path;
    }
    m.finish();
  }
  v.finish();
  return base;
}

inline nlohmann::json scenario_to_json(const ParsedScenario& ps) {
  const ScenarioConfig& sc = ps.scenario;
  nlohmann::json j;
  j["horizon"] = sc.horizon;
  j["t_s"] = sc.t_s;
  j["tau_u"] = sc.tau_u;
  j["n_sim"] = sc.n_sim;
  j["controller"] = controller_name(sc.controller);
  j["seed"] = sc.seed;
  j["warm_start"] = sc.warm_start;
  j["optimize_setpoints"] = sc.optimize_setpoints;
  j["divergence_bound"] = sc.divergence_bound;
  j["model_params"] = params_to_json(sc.model_params);
  j["plant_params"] = params_to_json(sc.plant_params);
  j["solver"] = solver_to_json(sc.solver);
  j["oracle"] = oracle_to_json(sc.oracle);
  j["fixed_point"] = fixed_point_to_json(sc.fixed_point);
  j["setpoint_search"] = search_to_json(sc.setpoint_search);
  j["setpoints"] = nlohmann::json::array();
  for (const SignalSpec& s : sc.setpoints) j["setpoints"].push_back(signal_to_json(s));
  j["disturbances"] = nlohmann::json::array();
  for (const SignalSpec& s : sc.disturbances) j["disturbances"].push_back(signal_to_json(s));
  j["x0"] = nlohmann::json::array();
  for (const Eigen::VectorXd& x : sc.x0) {
    j["x0"].push_back(std::vector<double>(x.data(), x.data() + x.size()));
  }
  j["surrogate_models"] = nlohmann::json::object();
  for (const auto& [sub, model_path] : ps.surrogate_paths) {
    j["surrogate_models"][std::to_string(sub)] = model_path;
  }
  return j;
}

}  // namespace detail

/// Parses a full configuration document. Sections: `scenario` (the base
/// experiment), `surrogate` (training architecture plus RPROP settings) and
/// `bench` (study sizes and scenario overlays). Every section and key is
/// optional — the defaults are the library defaults — but nothing unknown
/// passes.
inline RunConfig parse_config(const nlohmann::json& doc) {
  detail::StrictView v(doc, "config");
  RunConfig rc;
  if (const nlohmann::json* s = v.take("scenario")) {
    rc.base = detail::parse_scenario(*s, "config.scenario", ParsedScenario{});
  }
  if (const nlohmann::json* s = v.take("surrogate")) {
    detail::StrictView sv(*s, "config.surrogate");
    detail::assign(sv, "hidden_layers", rc.hidden_layers);
    if (const nlohmann::json* r = sv.take("rprop")) {
      detail::parse_rprop(*r, "config.surrogate.rprop", rc.rprop);
    }
    sv.finish();
    if (rc.hidden_layers.empty()) {
      throw ConfigError("config.surrogate.hidden_layers: need at least one hidden layer");
    }
    for (int wdt : rc.hidden_layers) {
      if (wdt < 1) throw ConfigError("config.surrogate.hidden_layers: widths must be positive");
    }
  }
  if (const nlohmann::json* b = v.take("bench")) {
    detail::StrictView bv(*b, "config.bench");
    detail::assign(bv, "n_instances", rc.bench.n_instances);
    detail::assign(bv, "dataset_seed", rc.bench.dataset_seed);
    detail::assign(bv, "min_activity", rc.bench.min_activity);
    detail::assign(bv, "assert_j_bar_max", rc.bench.assert_j_bar_max);
    if (const nlohmann::json* list = bv.take("scenarios")) {
      if (!list->is_array()) {
        throw ConfigError("config.bench.scenarios: expected an array of scenario overlays");
      }
      for (std::size_t i = 0; i < list->size(); ++i) {
        rc.bench.scenarios.push_back(detail::parse_scenario(
            (*list)[i], "config.bench.scenarios[" + std::to_string(i) + "]", rc.base));
      }
    }
    bv.finish();
    if (rc.bench.n_instances < 1) throw ConfigError("config.bench.n_instances: must be >= 1");
  }
  v.finish();
  return rc;
}

/// Parses document text, turning syntax errors into ConfigError with the
/// parser's line/column diagnostic.
inline RunConfig parse_config_text(const std::string& text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return parse_config(doc);
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

/// The canonical normalized form: every setting explicit, keys sorted by the
/// JSON library. Writing this next to a run's outputs records exactly what
/// the run used.
inline nlohmann::json config_to_json(const RunConfig& rc) {
  nlohmann::json j;
  j["scenario"] = detail::scenario_to_json(rc.base);
  j["surrogate"] = {{"hidden_layers", rc.hidden_layers},
                    {"rprop", detail::rprop_to_json(rc.rprop)}};
  nlohmann::json b;
  b["n_instances"] = rc.bench.n_instances;
  b["dataset_seed"] = rc.bench.dataset_seed;
  b["min_activity"] = rc.bench.min_activity;
  b["assert_j_bar_max"] = rc.bench.assert_j_bar_max;
  b["scenarios"] = nlohmann::json::array();
  for (const ParsedScenario& ps : rc.bench.scenarios) {
    b["scenarios"].push_back(detail::scenario_to_json(ps));
  }
  j["bench"] = b;
  return j;
}

/// HIERAX_SEED replaces every seed the document carries (base scenario,
/// overlay scenarios, solver-study dataset, training split), so one
/// environment variable re-seeds a whole experiment. Pass the raw
/// environment value; nullptr (unset) is a no-op.
inline void apply_seed_override(RunConfig& rc, const char* env_value) {
  if (env_value == nullptr) return;
  std::uint64_t seed = 0;
  try {
    std::size_t used = 0;
    seed = std::stoull(env_value, &used);
    if (used != std::string(env_value).size()) throw std::invalid_argument("trailing junk");
  } catch (const std::exception&) {
    throw ConfigError(std::string("HIERAX_SEED: not a non-negative integer: ") + env_value);
  }
  rc.base.scenario.seed = seed;
  for (ParsedScenario& ps : rc.bench.scenarios) ps.scenario.seed = seed;
  rc.bench.dataset_seed = seed;
  rc.rprop.seed = seed;
}

/// Loads the referenced model files into the scenario (paths are used as
/// given, i.e. relative to the current working directory).
inline void load_surrogate_models(ParsedScenario& ps) {
  for (const auto& [sub, model_path] : ps.surrogate_paths) {
    ps.scenario.surrogates[sub] = load_mlp(model_path);
  }
}

}  // namespace hierax
