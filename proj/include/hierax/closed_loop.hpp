#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hierax/benchmark.hpp"
#include "hierax/coordinator.hpp"
#include "hierax/prbs.hpp"
#include "hierax/rng.hpp"
#include "hierax/surrogate.hpp"

namespace hierax {

enum class ControllerKind { exact, truncated, surrogate };

inline const char* controller_name(ControllerKind k) {
  switch (k) {
    case ControllerKind::exact:
      return "exact";
    case ControllerKind::truncated:
      return "truncated";
    case ControllerKind::surrogate:
      return "surrogate";
  }
  return "unknown";
}

/// One scalar exogenous channel (a set-point component or a disturbance
/// component) over the simulation: a constant, a seeded PRBS over the
/// channel's range, or an explicit sequence (last value repeated past its
/// end).
struct SignalSpec {
  enum class Kind { constant, prbs, sequence };
  Kind kind = Kind::constant;
  double value = 0.0;
  double lo = 0.0, hi = 0.0;         // prbs levels
  int hold_min = 1, hold_max = 1;    // prbs hold range, in plant steps
  std::vector<double> values;        // sequence

  static SignalSpec make_constant(double v) {
    SignalSpec s;
    s.value = v;
    return s;
  }
  static SignalSpec make_prbs(double lo, double hi, int hold_min, int hold_max) {
    SignalSpec s;
    s.kind = Kind::prbs;
    s.lo = lo;
    s.hi = hi;
    s.hold_min = hold_min;
    s.hold_max = hold_max;
    return s;
  }
  static SignalSpec make_sequence(std::vector<double> vals) {
    SignalSpec s;
    s.kind = Kind::sequence;
    s.values = std::move(vals);
    return s;
  }

  Eigen::VectorXd realize(int length, std::uint64_t seed) const {
    if (length < 1) throw std::invalid_argument("SignalSpec: length < 1");
    switch (kind) {
      case Kind::constant:
        return Eigen::VectorXd::Constant(length, value);
      case Kind::prbs:
        return generate_prbs(lo, hi, length, hold_min, hold_max, seed);
      case Kind::sequence: {
        if (values.empty()) throw std::invalid_argument("SignalSpec: empty sequence");
        Eigen::VectorXd out(length);
        for (int i = 0; i < length; ++i) {
          out[i] = values[std::min<std::size_t>(i, values.size() - 1)];
        }
        return out;
      }
    }
    throw std::logic_error("SignalSpec: unknown kind");
  }
};

/// A full closed-loop experiment. The plant advances in steps of t_s; the
/// coordinator re-plans every updating period tau_u, i.e. every
/// steps_per_period() plant steps. Between re-plans the stored control
/// profile is walked forward step by step, and when an update fails to
/// converge the previous plan simply keeps being walked (its later entries
/// are applied) instead of trusting an unconverged iterate.
///
/// Empty `setpoints` means "hold every channel at the benchmark default";
/// empty `disturbances` means zero disturbance. Channels are ordered by
/// ascending subsystem index, components within a subsystem in order.
struct ScenarioConfig {
  int horizon = 10;
  double t_s = 1.0;    // plant sampling time
  double tau_u = 1.0;  // coordinator updating period, in the same time unit
  int n_sim = 1;       // number of plant steps to simulate

  ControllerKind controller = ControllerKind::exact;
  BenchmarkParams model_params;  // what the local controllers believe
  BenchmarkParams plant_params;  // what the simulated plant actually does

  SolverConfig solver;  // truncated local solves
  OracleConfig oracle;  // exact local solves
  FixedPointConfig fixed_point;
  bool warm_start = true;

  std::vector<SignalSpec> setpoints;
  std::vector<SignalSpec> disturbances;
  std::uint64_t seed = 1;

  // controller == surrogate: network per subsystem; subsystems without an
  // entry fall back to the exact controller
  std::map<int, MlpParams> surrogates;

  bool optimize_setpoints = false;
  CompassConfig setpoint_search;

  std::vector<Eigen::VectorXd> x0;  // initial plant states; empty = all zero
  double divergence_bound = 1e9;    // abort when any |x|_inf exceeds this

  int steps_per_period() const {
    return std::max(1, static_cast<int>(std::lround(tau_u / t_s)));
  }

  void validate() const {
    if (horizon < 1) throw std::invalid_argument("ScenarioConfig: horizon < 1");
    if (!(t_s > 0.0)) throw std::invalid_argument("ScenarioConfig: t_s must be positive");
    if (!(tau_u > 0.0)) throw std::invalid_argument("ScenarioConfig: tau_u must be positive");
    if (n_sim < 1) throw std::invalid_argument("ScenarioConfig: n_sim < 1");
    if (!(divergence_bound > 0.0)) {
      throw std::invalid_argument("ScenarioConfig: divergence bound must be positive");
    }
    fixed_point.validate();
    if (optimize_setpoints) setpoint_search.validate();
  }
};

/// Set-point channels held at the benchmark operating point.
inline std::vector<SignalSpec> constant_setpoint_signals(const BenchmarkSystem& sys) {
  std::vector<SignalSpec> out;
  for (const ControlledSpec& cs : sys.controlled) {
    for (Eigen::Index i = 0; i < cs.setpoint_default.size(); ++i) {
      out.push_back(SignalSpec::make_constant(cs.setpoint_default[i]));
    }
  }
  return out;
}

/// PRBS excitation across each set-point channel's operational range.
inline std::vector<SignalSpec> prbs_setpoint_signals(const BenchmarkSystem& sys, int hold_min,
                                                     int hold_max) {
  std::vector<SignalSpec> out;
  for (const ControlledSpec& cs : sys.controlled) {
    for (Eigen::Index i = 0; i < cs.setpoint_default.size(); ++i) {
      out.push_back(
          SignalSpec::make_prbs(cs.setpoint_lo[i], cs.setpoint_hi[i], hold_min, hold_max));
    }
  }
  return out;
}

/// PRBS excitation across the benchmark's realistic disturbance range.
inline std::vector<SignalSpec> prbs_disturbance_signals(const BenchmarkSystem& sys, int hold_min,
                                                        int hold_max) {
  std::vector<SignalSpec> out;
  for (std::size_t m = 0; m < sys.models.size(); ++m) {
    for (int i = 0; i < sys.models[m]->disturbance_dim(); ++i) {
      out.push_back(SignalSpec::make_prbs(sys.w1_lo, sys.w1_hi, hold_min, hold_max));
    }
  }
  return out;
}

/// The simulated truth: steps all subsystems together, resolving the
/// algebraic coupling loop v_in = G * v_out(x, u, v_in, w) at each step by
/// fixed-point iteration (the benchmark's loop gain is strongly contractive,
/// so a handful of passes reach machine precision).
class PlantSimulator {
 public:
  struct StepLog {
    std::vector<Eigen::VectorXd> y;
    std::vector<Eigen::VectorXd> v_in;
  };

  explicit PlantSimulator(const BenchmarkSystem& sys)
      : models_(sys.models), topo1_(sys.topology) {
    topo1_.horizon = 1;
    ix_ = std::make_unique<TopologyIndex>(topo1_);
    routing_ = build_routing(topo1_);
    const int n = topo1_.n_subsystems;
    x_.resize(n);
    for (int s = 1; s <= n; ++s) {
      x_[s - 1] = Eigen::VectorXd::Zero(models_[s - 1]->state_dim());
    }
    v_guess_ = Eigen::VectorXd::Zero(ix_->stack_len());
  }

  const std::vector<Eigen::VectorXd>& states() const { return x_; }

  void set_states(const std::vector<Eigen::VectorXd>& x) {
    if (x.size() != x_.size()) throw std::invalid_argument("PlantSimulator: state count mismatch");
    for (std::size_t i = 0; i < x.size(); ++i) {
      if (x[i].size() != x_[i].size()) {
        throw std::invalid_argument("PlantSimulator: state dimension mismatch");
      }
    }
    x_ = x;
  }

  StepLog step(const std::vector<Eigen::VectorXd>& u, const std::vector<Eigen::VectorXd>& w) {
    const int n = topo1_.n_subsystems;
    if (static_cast<int>(u.size()) != n || static_cast<int>(w.size()) != n) {
      throw std::invalid_argument("PlantSimulator: per-subsystem input count mismatch");
    }

    Eigen::VectorXd v = v_guess_;
    Eigen::VectorXd v_out(routing_.cols());
    bool settled = false;
    for (int pass = 0; pass < 500 && !settled; ++pass) {
      for (int s = 1; s <= n; ++s) {
        const StepResult r = models_[s - 1]->step(
            x_[s - 1], u[s - 1], v.segment(ix_->sub_in_offset(s), ix_->sub_in_len(s)), w[s - 1]);
        v_out.segment(ix_->sub_out_offset(s), ix_->sub_out_len(s)) = r.v_out;
      }
      const Eigen::VectorXd v_next = assemble_incoming(v_out, routing_);
      settled = (v_next - v).lpNorm<Eigen::Infinity>() <= 1e-12;
      v = v_next;
    }
    if (!settled) throw std::runtime_error("PlantSimulator: coupling loop did not settle");
    v_guess_ = v;

    // commit the step against the settled couplings
    StepLog out;
    out.y.resize(n);
    out.v_in.resize(n);
    for (int s = 1; s <= n; ++s) {
      out.v_in[s - 1] = v.segment(ix_->sub_in_offset(s), ix_->sub_in_len(s));
      const StepResult r = models_[s - 1]->step(x_[s - 1], u[s - 1], out.v_in[s - 1], w[s - 1]);
      x_[s - 1] = r.x_next;
      out.y[s - 1] = r.y;
    }
    return out;
  }

 private:
  std::vector<std::shared_ptr<SubsystemModel>> models_;
  CouplingTopology topo1_;
  std::unique_ptr<TopologyIndex> ix_;
  RoutingMatrix routing_;
  std::vector<Eigen::VectorXd> x_;
  Eigen::VectorXd v_guess_;
};

/// Local controllers for the benchmark network per the scenario's controller
/// choice; uncontrolled subsystems get plain rollout agents.
inline std::vector<std::shared_ptr<Agent>> make_benchmark_agents(const BenchmarkSystem& sys,
                                                                 const ScenarioConfig& sc) {
  std::vector<std::shared_ptr<Agent>> agents;
  const int n = sys.topology.n_subsystems;
  for (int s = 1; s <= n; ++s) {
    const auto& model = sys.models[s - 1];
    if (model->input_dim() == 0) {
      agents.push_back(std::make_shared<RolloutAgent>(s, model, sys.costs[s - 1]));
      continue;
    }
    const ControlledSpec& cs = sys.controlled_spec(s);
    const auto it = sc.surrogates.find(s);
    if (sc.controller == ControllerKind::surrogate && it != sc.surrogates.end()) {
      agents.push_back(std::make_shared<SurrogateAgent>(s, model, sys.costs[s - 1], cs.u_lo,
                                                        cs.u_hi, sc.horizon, it->second));
      continue;
    }
    const NmpcAgent::Kind kind = (sc.controller == ControllerKind::truncated)
                                     ? NmpcAgent::Kind::truncated
                                     : NmpcAgent::Kind::exact;
    auto agent = std::make_shared<NmpcAgent>(s, model, sys.costs[s - 1], cs.u_lo, cs.u_hi,
                                             sc.horizon, kind);
    agent->solver_config() = sc.solver;
    agent->oracle_config() = sc.oracle;
    agent->set_warm_start(sc.warm_start);
    agents.push_back(agent);
  }
  return agents;
}

struct ClosedLoopResult {
  double j_c_cl = 0.0;
  Eigen::MatrixXd log;  // one row per plant step
  std::vector<std::string> columns;
  int updates = 0;
  int non_converged_updates = 0;
  std::vector<int> sweeps_per_update;
  std::vector<double> solve_seconds;   // every controlled-subsystem local solve
  std::vector<double> update_seconds;  // whole-coordination wall time per update
};

inline int log_column(const ClosedLoopResult& res, const std::string& name) {
  for (std::size_t i = 0; i < res.columns.size(); ++i) {
    if (res.columns[i] == name) return static_cast<int>(i);
  }
  throw std::invalid_argument("log_column: no column named " + name);
}

/// Core loop over a caller-assembled network and plant, so callers can hook
/// solve observers onto the agents first. `sys` supplies the cost specs,
/// actuator boxes and channel layout (identical between the model- and
/// plant-side builds; only dynamics parameters may differ).
inline ClosedLoopResult closed_loop_run(const ScenarioConfig& sc, AgentNetwork& net,
                                        PlantSimulator& plant, const BenchmarkSystem& sys) {
  sc.validate();
  if (!sc.x0.empty()) plant.set_states(sc.x0);

  const int n = sys.topology.n_subsystems;
  const int horizon = sc.horizon;
  const int n_r = net.setpoint_dim();
  int n_wch = 0;
  for (const auto& m : sys.models) n_wch += m->disturbance_dim();

  // realized exogenous channels: set-points first, then disturbances
  std::vector<SignalSpec> sp = sc.setpoints.empty() ? constant_setpoint_signals(sys) : sc.setpoints;
  if (static_cast<int>(sp.size()) != n_r) {
    throw std::invalid_argument("closed_loop_run: need one set-point signal per channel");
  }
  std::vector<SignalSpec> dist = sc.disturbances;
  if (dist.empty()) dist.assign(n_wch, SignalSpec::make_constant(0.0));
  if (static_cast<int>(dist.size()) != n_wch) {
    throw std::invalid_argument("closed_loop_run: need one disturbance signal per channel");
  }
  Eigen::MatrixXd r_sig(n_r, sc.n_sim);
  for (int c = 0; c < n_r; ++c) {
    r_sig.row(c) = sp[c].realize(sc.n_sim, derive_seed(sc.seed, c)).transpose();
  }
  Eigen::MatrixXd w_sig(n_wch, sc.n_sim);
  for (int c = 0; c < n_wch; ++c) {
    w_sig.row(c) = dist[c].realize(sc.n_sim, derive_seed(sc.seed, n_r + c)).transpose();
  }

  // per-subsystem channel slices
  std::vector<int> w_off(n, 0);
  {
    int off = 0;
    for (int s = 1; s <= n; ++s) {
      w_off[s - 1] = off;
      off += sys.models[s - 1]->disturbance_dim();
    }
  }
  std::vector<int> controlled;  // ascending subsystem ids
  std::vector<int> r_off(n, 0);
  {
    int off = 0;
    for (int s = 1; s <= n; ++s) {
      if (sys.models[s - 1]->input_dim() > 0) {
        controlled.push_back(s);
        r_off[s - 1] = off;
        off += sys.models[s - 1]->output_dim();
      }
    }
  }

  // set-point box for the optional outer search
  Eigen::VectorXd r_lo(n_r), r_hi(n_r);
  {
    int off = 0;
    for (int s : controlled) {
      const ControlledSpec& cs = sys.controlled_spec(s);
      r_lo.segment(off, cs.setpoint_lo.size()) = cs.setpoint_lo;
      r_hi.segment(off, cs.setpoint_hi.size()) = cs.setpoint_hi;
      off += static_cast<int>(cs.setpoint_lo.size());
    }
  }

  // plans start as the clamped rest input and are replaced by the first
  // converged coordination
  std::map<int, Profile> plans;
  for (int s : controlled) {
    const ControlledSpec& cs = sys.controlled_spec(s);
    Profile p(horizon, sys.models[s - 1]->input_dim());
    const Eigen::VectorXd rest =
        Eigen::VectorXd::Zero(cs.u_lo.size()).cwiseMax(cs.u_lo).cwiseMin(cs.u_hi);
    for (int k = 0; k < horizon; ++k) p.step(k) = rest;
    plans.emplace(s, std::move(p));
  }
  int plan_start_step = 0;

  const int period = sc.steps_per_period();
  Eigen::VectorXd v_warm;
  bool have_v = false;
  Eigen::VectorXd r_applied = r_sig.col(0);
  int last_sweeps = 0;
  double last_converged = 1.0;
  double last_solve_seconds = 0.0;

  // log layout
  ClosedLoopResult res;
  res.columns.push_back("time");
  for (int s = 1; s <= n; ++s) {
    for (int i = 0; i < sys.models[s - 1]->output_dim(); ++i) {
      res.columns.push_back("y" + std::to_string(s) + "_" + std::to_string(i + 1));
    }
  }
  for (int s : controlled) {
    for (int i = 0; i < sys.models[s - 1]->input_dim(); ++i) {
      res.columns.push_back("u" + std::to_string(s) + "_" + std::to_string(i + 1));
    }
  }
  for (int s : controlled) {
    for (int i = 0; i < sys.models[s - 1]->output_dim(); ++i) {
      res.columns.push_back("r" + std::to_string(s) + "_" + std::to_string(i + 1));
    }
  }
  for (int s = 1; s <= n; ++s) {
    for (int i = 0; i < sys.models[s - 1]->disturbance_dim(); ++i) {
      res.columns.push_back("w" + std::to_string(s) + "_" + std::to_string(i + 1));
    }
  }
  for (int s = 1; s <= n; ++s) res.columns.push_back("j_" + std::to_string(s));
  res.columns.push_back("sweeps");
  res.columns.push_back("converged");
  res.columns.push_back("updated");
  res.columns.push_back("solver_seconds");
  res.log.resize(sc.n_sim, static_cast<Eigen::Index>(res.columns.size()));

  double j_accum = 0.0;
  for (int i = 0; i < sc.n_sim; ++i) {
    const bool update_now = (i % period == 0);
    if (update_now) {
      if (i > 0) {
        net.advance_agents(period);
        if (have_v) v_warm = shift_incoming_stack(v_warm, net.index(), period);
      }
      CoordinationInputs in;
      in.x = plant.states();
      in.w.reserve(n);
      for (int s = 1; s <= n; ++s) {
        const int n_w = sys.models[s - 1]->disturbance_dim();
        Profile wp(horizon, n_w);
        for (int k = 0; k < horizon; ++k) {
          // preview = current measurement held over the horizon
          wp.step(k) = w_sig.col(i).segment(w_off[s - 1], n_w);
        }
        in.w.push_back(std::move(wp));
      }
      Eigen::VectorXd r_now = r_sig.col(i);

      const auto t0 = std::chrono::steady_clock::now();
      CoordinationResult cres;
      if (sc.optimize_setpoints) {
        const SetpointSearchResult sr =
            optimize_setpoints(net, in, r_now, r_lo, r_hi, sc.fixed_point, sc.setpoint_search);
        cres = sr.at_opt;
        r_now = sr.r_opt;
      } else {
        cres = evaluate_setpoint(net, r_now, in, sc.fixed_point, have_v ? &v_warm : nullptr);
      }
      res.update_seconds.push_back(
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());

      ++res.updates;
      res.sweeps_per_update.push_back(cres.sweeps);
      last_sweeps = cres.sweeps;
      last_converged = cres.converged ? 1.0 : 0.0;
      last_solve_seconds = 0.0;
      for (int s : controlled) {
        const AgentResult& lr = cres.locals[s - 1];
        res.solve_seconds.push_back(lr.solve_seconds);
        last_solve_seconds += lr.solve_seconds;
      }
      v_warm = cres.v_in_star;
      have_v = true;
      r_applied = r_now;
      if (cres.converged) {
        for (int s : controlled) plans.at(s) = cres.locals[s - 1].u;
        plan_start_step = i;
      } else {
        ++res.non_converged_updates;
      }
    }

    const int k = std::min(i - plan_start_step, horizon - 1);
    std::vector<Eigen::VectorXd> u(n), w(n);
    for (int s = 1; s <= n; ++s) {
      u[s - 1] = Eigen::VectorXd(0);
      w[s - 1] = w_sig.col(i).segment(w_off[s - 1], sys.models[s - 1]->disturbance_dim());
    }
    for (int s : controlled) u[s - 1] = plans.at(s).step(k);

    const PlantSimulator::StepLog st = plant.step(u, w);

    // per-step stage costs against the set-points the controllers were given
    std::vector<double> j_s(n, 0.0);
    double j_step = 0.0;
    for (int s = 1; s <= n; ++s) {
      Profile yp(1, static_cast<int>(st.y[s - 1].size()), st.y[s - 1]);
      Profile up(1, static_cast<int>(u[s - 1].size()), u[s - 1]);
      Eigen::VectorXd r_d;
      if (sys.models[s - 1]->input_dim() > 0) {
        r_d = r_applied.segment(r_off[s - 1], sys.models[s - 1]->output_dim());
      }
      j_s[s - 1] = local_cost(sys.costs[s - 1], yp, up, r_d);
      j_step += j_s[s - 1];
    }
    j_accum += j_step;

    Eigen::Index col = 0;
    res.log(i, col++) = i * sc.t_s;
    for (int s = 1; s <= n; ++s) {
      for (Eigen::Index c = 0; c < st.y[s - 1].size(); ++c) res.log(i, col++) = st.y[s - 1][c];
    }
    for (int s : controlled) {
      for (Eigen::Index c = 0; c < u[s - 1].size(); ++c) res.log(i, col++) = u[s - 1][c];
    }
    for (int s : controlled) {
      const int n_y = sys.models[s - 1]->output_dim();
      for (int c = 0; c < n_y; ++c) res.log(i, col++) = r_applied[r_off[s - 1] + c];
    }
    res.log.row(i).segment(col, n_wch) = w_sig.col(i).transpose();
    col += n_wch;
    for (int s = 1; s <= n; ++s) res.log(i, col++) = j_s[s - 1];
    res.log(i, col++) = last_sweeps;
    res.log(i, col++) = last_converged;
    res.log(i, col++) = update_now ? 1.0 : 0.0;
    res.log(i, col++) = last_solve_seconds;

    for (int s = 1; s <= n; ++s) {
      if (plant.states()[s - 1].lpNorm<Eigen::Infinity>() > sc.divergence_bound) {
        throw std::runtime_error("closed_loop_run: plant diverged at step " + std::to_string(i));
      }
    }
  }

  res.j_c_cl = j_accum / static_cast<double>(sc.n_sim);
  return res;
}

inline ClosedLoopResult closed_loop_run(const ScenarioConfig& sc) {
  sc.validate();
  const BenchmarkSystem model_sys = build_benchmark(sc.horizon, sc.model_params);
  const BenchmarkSystem plant_sys = build_benchmark(sc.horizon, sc.plant_params);
  auto agents = make_benchmark_agents(model_sys, sc);
  AgentNetwork net(model_sys.topology, agents);
  PlantSimulator plant(plant_sys);
  return closed_loop_run(sc, net, plant, model_sys);
}

}  // namespace hierax
