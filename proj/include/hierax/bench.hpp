#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hierax/closed_loop.hpp"
#include "hierax/dataset.hpp"

namespace hierax {

/// One frozen local instance for the solver study: the (state, set-point,
/// incoming-coupling) triplet a controlled subsystem was asked to solve
/// during a closed-loop run, plus the disturbance preview it saw.
struct SolverInstance {
  int subsystem = 0;
  Eigen::VectorXd x_s;
  Eigen::VectorXd r_s;
  Profile v_in;
  Profile w;
};

/// The sampled instance set together with the componentwise state envelope
/// of the runs that generated it (per subsystem: every state an instance was
/// captured at, plus the runs' initial and final plant states). Every
/// instance's state lies inside its subsystem's envelope by construction;
/// the bench tests assert that bookkeeping.
struct SolverDataset {
  int horizon = 0;
  std::vector<SolverInstance> instances;
  std::vector<Eigen::VectorXd> x_lo, x_hi;  // index s-1
};

/// Harvests `n` operationally realistic local instances by running the
/// benchmark closed loop (exact controllers, PRBS set-points and
/// disturbances across the operational ranges unless the base scenario says
/// otherwise) and recording every local solve of every controlled subsystem.
/// The plant is first settled at the default operating point, so instances
/// reflect regulation around changing set-points rather than the synthetic
/// start-up transient. Full runs with derived seeds accumulate into a pool
/// until it covers `n`; the result is an evenly strided subsample of the
/// pool, which spreads the instances across the whole simulated operation
/// instead of clustering on the first coordination. Deterministic per seed.
///
/// Instances whose converged cost falls below `min_activity` times the
/// pool's peak cost are dropped: a percentage-of-optimum comparison is
/// meaningless when the optimum is numerically zero (plant settled mid-hold,
/// nothing left to control), so the dataset keeps the instances where the
/// controller actually has work to do.
inline SolverDataset make_solver_dataset(int n, std::uint64_t seed,
                                         ScenarioConfig base = ScenarioConfig{},
                                         double min_activity = 1e-4) {
  if (n < 1) throw std::invalid_argument("make_solver_dataset: n < 1");
  if (base.controller != ControllerKind::exact) {
    throw std::invalid_argument("make_solver_dataset: base scenario must use the exact controller");
  }

  const BenchmarkSystem sys = build_benchmark(base.horizon, base.model_params);
  if (base.setpoints.empty()) base.setpoints = prbs_setpoint_signals(sys, 5, 15);
  if (base.disturbances.empty()) base.disturbances = prbs_disturbance_signals(sys, 5, 15);
  if (base.n_sim < 2) base.n_sim = 12;

  if (base.x0.empty()) {
    // settle at the default operating point under the mid-range disturbance
    ScenarioConfig settle = base;
    settle.n_sim = 15;
    settle.seed = 0;
    settle.setpoints = constant_setpoint_signals(sys);
    settle.disturbances.assign(base.disturbances.size(),
                               SignalSpec::make_constant(0.5 * (sys.w1_lo + sys.w1_hi)));
    const BenchmarkSystem model_sys = build_benchmark(settle.horizon, settle.model_params);
    const BenchmarkSystem plant_sys = build_benchmark(settle.horizon, settle.plant_params);
    auto agents = make_benchmark_agents(model_sys, settle);
    AgentNetwork net(model_sys.topology, agents);
    PlantSimulator plant(plant_sys);
    closed_loop_run(settle, net, plant, model_sys);
    base.x0 = plant.states();
  }

  SolverDataset out;
  out.horizon = base.horizon;
  const int n_sub = sys.topology.n_subsystems;
  out.x_lo.resize(n_sub);
  out.x_hi.resize(n_sub);
  for (int s = 1; s <= n_sub; ++s) {
    const int n_x = sys.models[s - 1]->state_dim();
    out.x_lo[s - 1] = Eigen::VectorXd::Constant(n_x, std::numeric_limits<double>::infinity());
    out.x_hi[s - 1] = Eigen::VectorXd::Constant(n_x, -std::numeric_limits<double>::infinity());
  }
  const auto fold = [&](int s, const Eigen::VectorXd& x) {
    out.x_lo[s - 1] = out.x_lo[s - 1].cwiseMin(x);
    out.x_hi[s - 1] = out.x_hi[s - 1].cwiseMax(x);
  };

  std::vector<SolverInstance> pool;
  std::vector<double> pool_cost;
  const auto active_indices = [&] {
    const double peak = pool_cost.empty()
                            ? 0.0
                            : *std::max_element(pool_cost.begin(), pool_cost.end());
    const double floor = min_activity * peak;
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < pool.size(); ++i) {
      if (pool_cost[i] >= floor) idx.push_back(i);
    }
    return idx;
  };

  std::vector<std::size_t> active;
  for (int run = 0;; ++run) {
    ScenarioConfig sc_run = base;
    sc_run.seed = derive_seed(seed, run);

    const BenchmarkSystem model_sys = build_benchmark(sc_run.horizon, sc_run.model_params);
    const BenchmarkSystem plant_sys = build_benchmark(sc_run.horizon, sc_run.plant_params);
    auto agents = make_benchmark_agents(model_sys, sc_run);

    const std::size_t before = pool.size();
    for (const ControlledSpec& cs : model_sys.controlled) {
      auto* agent = dynamic_cast<NmpcAgent*>(agents[cs.subsystem - 1].get());
      if (agent == nullptr) continue;
      const int s = cs.subsystem;
      agent->set_observer([&pool, &pool_cost, &fold, s](const Eigen::VectorXd& r_s,
                                                        const Eigen::VectorXd& x_s,
                                                        const Profile& v_in, const Profile& w,
                                                        const AgentResult& ar) {
        pool.push_back({s, x_s, r_s, v_in, w});
        pool_cost.push_back(ar.j_s);
        fold(s, x_s);
      });
    }

    AgentNetwork net(model_sys.topology, agents);
    PlantSimulator plant(plant_sys);
    for (int s = 1; s <= n_sub; ++s) fold(s, plant.states()[s - 1]);
    closed_loop_run(sc_run, net, plant, model_sys);
    for (int s = 1; s <= n_sub; ++s) fold(s, plant.states()[s - 1]);
    if (pool.size() == before) {
      throw std::runtime_error("make_solver_dataset: simulation produced no instances");
    }
    active = active_indices();
    if (active.size() >= static_cast<std::size_t>(n)) break;
  }

  out.instances.reserve(n);
  for (int i = 0; i < n; ++i) {
    const std::size_t pick = static_cast<std::size_t>(i) * active.size() / static_cast<std::size_t>(n);
    out.instances.push_back(std::move(pool[active[pick]]));
  }
  return out;
}

/// Outcome of the truncated-vs-converged open-loop study. Ratios are
/// J_truncated / J_reference per instance; j_bar is their mean in percent,
/// so parity reads as 100. Wall times come from the solver's own clock
/// around the iteration loop (problem construction excluded) and are
/// reported for context only — they are hardware noise, never a pass/fail
/// signal.
struct SolverComparisonReport {
  double j_bar = 0.0;  // percent
  double t_max_truncated = 0.0;
  double t_max_reference = 0.0;
  std::vector<double> ratios;
  std::vector<double> j_truncated, j_reference;
  std::vector<double> t_truncated, t_reference;
  int n_dta = 0;     // retained instances
  int excluded = 0;  // reference failed to converge
};

/// Runs both solvers cold on every instance of the dataset. Instances whose
/// reference solve hits its iteration cap are excluded from the statistics
/// and counted instead.
inline SolverComparisonReport compare_solvers(const SolverDataset& dataset,
                                              const SolverConfig& truncated_cfg,
                                              const OracleConfig& reference_cfg = {}) {
  if (dataset.instances.empty()) throw std::invalid_argument("compare_solvers: empty dataset");
  truncated_cfg.validate();
  const BenchmarkSystem sys = build_benchmark(dataset.horizon);

  SolverComparisonReport rep;
  for (const SolverInstance& inst : dataset.instances) {
    const ControlledSpec& cs = sys.controlled_spec(inst.subsystem);
    LocalProblem prob;
    prob.model = sys.models[inst.subsystem - 1].get();
    prob.x0 = inst.x_s;
    prob.r_s = inst.r_s;
    prob.v_in = inst.v_in;
    prob.w = inst.w;
    prob.u_lo = cs.u_lo;
    prob.u_hi = cs.u_hi;
    prob.cost = sys.costs[inst.subsystem - 1];
    prob.horizon = dataset.horizon;

    const SolveReport ref = solve_oracle(prob, reference_cfg);
    if (!ref.converged) {
      ++rep.excluded;
      continue;
    }
    const SolveReport tr = solve(prob, truncated_cfg);

    rep.ratios.push_back(ref.j_final > 0.0 ? tr.j_final / ref.j_final : 1.0);
    rep.j_truncated.push_back(tr.j_final);
    rep.j_reference.push_back(ref.j_final);
    rep.t_truncated.push_back(tr.wall_seconds);
    rep.t_reference.push_back(ref.wall_seconds);
  }

  rep.n_dta = static_cast<int>(rep.ratios.size());
  if (rep.n_dta > 0) {
    double sum = 0.0;
    for (double r : rep.ratios) sum += r;
    rep.j_bar = 100.0 * sum / rep.n_dta;
    rep.t_max_truncated = *std::max_element(rep.t_truncated.begin(), rep.t_truncated.end());
    rep.t_max_reference = *std::max_element(rep.t_reference.begin(), rep.t_reference.end());
  }
  return rep;
}

/// One configuration's outcome in the closed-loop study.
struct ClosedLoopEntry {
  ControllerKind controller = ControllerKind::exact;
  double tau_u = 0.0;
  double j_c_cl = 0.0;
  int non_converged_updates = 0;
  std::vector<double> solve_seconds;   // per controlled local solve
  std::vector<double> update_seconds;  // per coordination
  bool failed = false;
  std::string error;
};

struct ClosedLoopComparisonReport {
  std::vector<ClosedLoopEntry> entries;
};

namespace detail {

inline bool same_signal(const SignalSpec& a, const SignalSpec& b) {
  return a.kind == b.kind && a.value == b.value && a.lo == b.lo && a.hi == b.hi &&
         a.hold_min == b.hold_min && a.hold_max == b.hold_max && a.values == b.values;
}

inline bool same_signals(const std::vector<SignalSpec>& a, const std::vector<SignalSpec>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!same_signal(a[i], b[i])) return false;
  }
  return true;
}

inline bool same_plant(const BenchmarkParams& a, const BenchmarkParams& b) {
  return a.coupling_gain == b.coupling_gain && a.nonlin_strength == b.nonlin_strength &&
         a.pole_scale == b.pole_scale && a.mismatch == b.mismatch;
}

}  // namespace detail

/// Runs every scenario against the identical disturbance realization and
/// duration (enforced, since the study compares controllers, not weather). A
/// scenario that aborts is reported as failed instead of sinking the whole
/// study.
inline ClosedLoopComparisonReport compare_closed_loop(const std::vector<ScenarioConfig>& scenarios) {
  if (scenarios.empty()) throw std::invalid_argument("compare_closed_loop: no scenarios");
  const ScenarioConfig& first = scenarios.front();
  for (const ScenarioConfig& sc : scenarios) {
    if (sc.n_sim != first.n_sim || sc.t_s != first.t_s || sc.seed != first.seed ||
        !detail::same_plant(sc.plant_params, first.plant_params) ||
        !detail::same_signals(sc.disturbances, first.disturbances)) {
      throw std::invalid_argument(
          "compare_closed_loop: scenarios must share plant, disturbances, seed and duration");
    }
  }

  ClosedLoopComparisonReport rep;
  for (const ScenarioConfig& sc : scenarios) {
    ClosedLoopEntry entry;
    entry.controller = sc.controller;
    entry.tau_u = sc.tau_u;
    try {
      const ClosedLoopResult res = closed_loop_run(sc);
      entry.j_c_cl = res.j_c_cl;
      entry.non_converged_updates = res.non_converged_updates;
      entry.solve_seconds = res.solve_seconds;
      entry.update_seconds = res.update_seconds;
    } catch (const std::exception& e) {
      entry.failed = true;
      entry.error = e.what();
    }
    rep.entries.push_back(std::move(entry));
  }
  return rep;
}

/// Summary table for the solver study: one row per solver with its budget,
/// tolerance, average performance ratio and worst wall time.
inline void print_solver_report(std::ostream& os, const SolverComparisonReport& rep,
                                const SolverConfig& truncated_cfg,
                                const OracleConfig& reference_cfg = {}) {
  char line[160];
  os << "open-loop solver comparison, " << rep.n_dta << " instances";
  if (rep.excluded > 0) os << " (" << rep.excluded << " excluded: reference not converged)";
  os << "\n";
  std::snprintf(line, sizeof(line), "%-22s %8s %10s %10s %12s\n", "solver", "n_max", "tol",
                "J_bar", "t_max");
  os << line;
  std::snprintf(line, sizeof(line), "%-22s %8d %10s %9.2f%% %10.4g s\n", "truncated gradient",
                truncated_cfg.n_max, "-", rep.j_bar, rep.t_max_truncated);
  os << line;
  std::snprintf(line, sizeof(line), "%-22s %8s %10.3g %9.2f%% %10.4g s\n", "converged reference",
                "-", reference_cfg.tol, 100.0, rep.t_max_reference);
  os << line;
}

/// Summary table for the closed-loop study: one row per configuration.
inline void print_closed_loop_report(std::ostream& os, const ClosedLoopComparisonReport& rep) {
  char line[160];
  std::snprintf(line, sizeof(line), "%-12s %8s %14s %8s %16s\n", "controller", "tau_u", "J_c_cl",
                "rejected", "median solve");
  os << line;
  for (const ClosedLoopEntry& e : rep.entries) {
    if (e.failed) {
      std::snprintf(line, sizeof(line), "%-12s %8.3g %14s %8s %16s  FAILED: %s\n",
                    controller_name(e.controller), e.tau_u, "-", "-", "-", e.error.c_str());
    } else {
      std::snprintf(line, sizeof(line), "%-12s %8.3g %14.6e %8d %13.3e s\n",
                    controller_name(e.controller), e.tau_u, e.j_c_cl, e.non_converged_updates,
                    detail::median(e.solve_seconds));
    }
    os << line;
  }
}

/// Per-instance CSV of the solver study. Wall-time columns are optional so
/// identical seeds can produce byte-identical files.
inline void write_solver_report_csv(const SolverComparisonReport& rep, const std::string& path,
                                    bool include_walltimes = true) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_solver_report_csv: cannot open " + path);
  out << "instance,ratio,j_truncated,j_reference";
  if (include_walltimes) out << ",t_truncated,t_reference";
  out << "\n";
  for (std::size_t i = 0; i < rep.ratios.size(); ++i) {
    out << i << ',' << detail::g17(rep.ratios[i]) << ',' << detail::g17(rep.j_truncated[i]) << ','
        << detail::g17(rep.j_reference[i]);
    if (include_walltimes) {
      out << ',' << detail::g17(rep.t_truncated[i]) << ',' << detail::g17(rep.t_reference[i]);
    }
    out << "\n";
  }
}

/// Per-configuration CSV of the closed-loop study, same wall-time knob.
inline void write_closed_loop_report_csv(const ClosedLoopComparisonReport& rep,
                                         const std::string& path, bool include_walltimes = true) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_closed_loop_report_csv: cannot open " + path);
  out << "entry,controller,tau_u,j_c_cl,non_converged_updates,failed";
  if (include_walltimes) out << ",median_solve_seconds,median_update_seconds";
  out << "\n";
  for (std::size_t i = 0; i < rep.entries.size(); ++i) {
    const ClosedLoopEntry& e = rep.entries[i];
    out << i << ',' << controller_name(e.controller) << ',' << detail::g17(e.tau_u) << ','
        << detail::g17(e.j_c_cl) << ',' << e.non_converged_updates << ',' << (e.failed ? 1 : 0);
    if (include_walltimes) {
      out << ',' << detail::g17(detail::median(e.solve_seconds)) << ','
          << detail::g17(detail::median(e.update_seconds));
    }
    out << "\n";
  }
}

}  // namespace hierax
