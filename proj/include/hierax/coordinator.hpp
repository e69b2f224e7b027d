#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "hierax/agents.hpp"
#include "hierax/profile.hpp"
#include "hierax/topology.hpp"

namespace hierax {

struct FixedPointConfig {
  int sigma_max = 30;
  double eps_tol = 1e-6;
  double alpha = 0.7;  // relaxation weight on the fresh sweep output

  void validate() const {
    if (sigma_max < 1) throw std::invalid_argument("FixedPointConfig: sigma_max < 1");
    if (!(eps_tol > 0.0)) throw std::invalid_argument("FixedPointConfig: eps_tol <= 0");
    if (!(alpha > 0.0 && alpha <= 1.0)) {
      throw std::invalid_argument("FixedPointConfig: alpha outside (0,1]");
    }
  }
};

/// The coupled system as the coordinator sees it: a topology plus one agent
/// per subsystem (index 0 holds subsystem 1).
class AgentNetwork {
 public:
  AgentNetwork(CouplingTopology topo, std::vector<std::shared_ptr<Agent>> agents)
      : topo_(std::move(topo)), ix_(topo_), routing_(build_routing(topo_)), agents_(std::move(agents)) {
    if (static_cast<int>(agents_.size()) != topo_.n_subsystems) {
      throw std::invalid_argument("AgentNetwork: one agent per subsystem required");
    }
    for (int s = 1; s <= topo_.n_subsystems; ++s) {
      const auto& a = agents_[static_cast<std::size_t>(s - 1)];
      if (!a) throw std::invalid_argument("AgentNetwork: missing agent " + std::to_string(s));
      if (a->subsystem() != s) {
        throw std::invalid_argument("AgentNetwork: agent order must follow subsystem index");
      }
      if (a->is_controlled() != ix_.is_controlled(s)) {
        throw std::invalid_argument("AgentNetwork: controlled flag mismatch for subsystem " +
                                    std::to_string(s));
      }
    }
  }

  const CouplingTopology& topology() const { return topo_; }
  const TopologyIndex& index() const { return ix_; }
  const RoutingMatrix& routing() const { return routing_; }
  int n_subsystems() const { return topo_.n_subsystems; }
  int horizon() const { return topo_.horizon; }

  Agent& agent(int s) { return *agents_.at(static_cast<std::size_t>(s - 1)); }
  const Agent& agent(int s) const { return *agents_.at(static_cast<std::size_t>(s - 1)); }

  /// Length of the concatenated set-point vector over controlled subsystems,
  /// ascending subsystem order.
  int setpoint_dim() const {
    int d = 0;
    for (const auto& a : agents_) d += a->setpoint_dim();
    return d;
  }

  /// Slices the stacked set-point vector into per-subsystem pieces (empty for
  /// uncontrolled subsystems).
  std::vector<Eigen::VectorXd> split_setpoint(const Eigen::VectorXd& r) const {
    if (r.size() != setpoint_dim()) {
      throw std::invalid_argument("split_setpoint: stacked set-point length mismatch");
    }
    std::vector<Eigen::VectorXd> parts;
    parts.reserve(agents_.size());
    Eigen::Index off = 0;
    for (const auto& a : agents_) {
      const int d = a->setpoint_dim();
      parts.push_back(r.segment(off, d));
      off += d;
    }
    return parts;
  }

  void reset_agents() {
    for (auto& a : agents_) a->reset();
  }
  void advance_agents(int steps) {
    for (auto& a : agents_) a->advance(steps);
  }

 private:
  CouplingTopology topo_;
  TopologyIndex ix_;
  RoutingMatrix routing_;
  std::vector<std::shared_ptr<Agent>> agents_;
};

/// Frozen per-problem data: subsystem states and disturbance previews
/// (index 0 holds subsystem 1).
struct CoordinationInputs {
  std::vector<Eigen::VectorXd> x;
  std::vector<Profile> w;
};

struct SweepResult {
  Eigen::VectorXd v_out;            // stacked outgoing coupling profiles
  std::vector<AgentResult> locals;  // per subsystem, index 0 holds subsystem 1
  bool all_solves_converged = true;
};

/// One pass over all subsystems at a frozen incoming-coupling guess. The
/// subsystem computations are mutually independent; any one of them failing
/// aborts the sweep with that subsystem named.
inline SweepResult sweep(AgentNetwork& net, const Eigen::VectorXd& r,
                         const CoordinationInputs& in, const Eigen::VectorXd& v_in) {
  const TopologyIndex& ix = net.index();
  if (v_in.size() != ix.stack_len()) {
    throw std::invalid_argument("sweep: stacked incoming length mismatch");
  }
  if (static_cast<int>(in.x.size()) != net.n_subsystems() ||
      static_cast<int>(in.w.size()) != net.n_subsystems()) {
    throw std::invalid_argument("sweep: one state and disturbance preview per subsystem required");
  }

  const std::vector<Eigen::VectorXd> r_parts = net.split_setpoint(r);
  const std::vector<Eigen::VectorXd> v_blocks = split_incoming(v_in, net.topology());

  SweepResult out;
  out.v_out = Eigen::VectorXd::Zero(ix.stack_len());
  out.locals.resize(static_cast<std::size_t>(net.n_subsystems()));

  for (int s = 1; s <= net.n_subsystems(); ++s) {
    const std::size_t i = static_cast<std::size_t>(s - 1);
    const Profile v_s =
        edge_blocks_to_time_major(v_blocks[i], ix.in_dims(s), ix.horizon());
    AgentResult res;
    try {
      res = net.agent(s).evaluate(r_parts[i], in.x[i], v_s, in.w[i]);
    } catch (const std::exception& e) {
      throw std::runtime_error("sweep: subsystem " + std::to_string(s) +
                               " failed: " + e.what());
    }
    if (res.v_out.horizon() != ix.horizon() || res.v_out.step_dim() != ix.n_vout(s)) {
      throw std::runtime_error("sweep: subsystem " + std::to_string(s) +
                               " returned an outgoing profile of wrong shape");
    }
    if (ix.n_vout(s) > 0) {
      out.v_out.segment(ix.sub_out_offset(s), ix.sub_out_len(s)) =
          time_major_to_edge_blocks(res.v_out, ix.out_dims(s));
    }
    out.all_solves_converged = out.all_solves_converged && res.solver_converged;
    out.locals[i] = std::move(res);
  }
  return out;
}

/// First-order relaxation toward the fresh sweep output.
inline Eigen::VectorXd filter_update(const Eigen::VectorXd& v_prev, const Eigen::VectorXd& v_hat,
                                     double alpha) {
  if (v_prev.size() != v_hat.size()) {
    throw std::invalid_argument("filter_update: length mismatch");
  }
  return (1.0 - alpha) * v_prev + alpha * v_hat;
}

struct CoordinationResult {
  double j_c = 0.0;
  Eigen::VectorXd v_in_star;        // filtered incoming profile at exit
  bool converged = false;
  int sweeps = 0;
  std::vector<double> j_s;          // per-subsystem costs from the final sweep
  std::vector<AgentResult> locals;  // final sweep's full per-subsystem results
  std::vector<double> residuals;    // max|Δv_in| after each sweep
  bool all_solves_converged = true;
};

inline double central_cost(const std::vector<double>& j_s) {
  double total = 0.0;
  for (double j : j_s) total += j;
  return total;
}

/// Filtered fixed-point iteration between the coordinator and the
/// subsystems. Runs until the incoming-coupling update stalls below eps_tol
/// or the sweep budget is exhausted; a non-converged result is returned with
/// the flag cleared rather than thrown, so the caller can decide.
inline CoordinationResult evaluate_setpoint(AgentNetwork& net, const Eigen::VectorXd& r,
                                            const CoordinationInputs& in,
                                            const FixedPointConfig& cfg = {},
                                            const Eigen::VectorXd* v_in_init = nullptr) {
  cfg.validate();
  const TopologyIndex& ix = net.index();

  Eigen::VectorXd v = Eigen::VectorXd::Zero(ix.stack_len());
  if (v_in_init != nullptr) {
    if (v_in_init->size() != ix.stack_len()) {
      throw std::invalid_argument("evaluate_setpoint: initial guess length mismatch");
    }
    v = *v_in_init;
  }

  CoordinationResult out;
  out.residuals.reserve(static_cast<std::size_t>(cfg.sigma_max));
  for (int sigma = 1; sigma <= cfg.sigma_max; ++sigma) {
    SweepResult sr = sweep(net, r, in, v);
    const Eigen::VectorXd v_hat = assemble_incoming(sr.v_out, net.routing());
    const Eigen::VectorXd v_next = filter_update(v, v_hat, cfg.alpha);
    const double resid =
        v.size() == 0 ? 0.0 : (v_next - v).lpNorm<Eigen::Infinity>();
    out.residuals.push_back(resid);
    out.sweeps = sigma;
    out.all_solves_converged = out.all_solves_converged && sr.all_solves_converged;
    v = v_next;

    const bool last = resid <= cfg.eps_tol || sigma == cfg.sigma_max;
    if (last) {
      out.converged = resid <= cfg.eps_tol;
      out.j_s.resize(sr.locals.size());
      for (std::size_t i = 0; i < sr.locals.size(); ++i) out.j_s[i] = sr.locals[i].j_s;
      out.j_c = central_cost(out.j_s);
      out.locals = std::move(sr.locals);
      break;
    }
  }
  out.v_in_star = std::move(v);
  return out;
}

struct CompassConfig {
  int budget = 60;                // evaluate_setpoint calls, including the start point
  double initial_step_frac = 0.25;  // of each component's box width
  double shrink = 0.5;
  double min_step_frac = 1e-3;    // stop once the step drops below this fraction

  void validate() const {
    if (budget < 1) throw std::invalid_argument("CompassConfig: budget < 1");
    if (!(initial_step_frac > 0.0) || !(shrink > 0.0 && shrink < 1.0) ||
        !(min_step_frac > 0.0)) {
      throw std::invalid_argument("CompassConfig: bad step schedule");
    }
  }
};

struct SetpointSearchResult {
  Eigen::VectorXd r_opt;
  double j_opt = 0.0;
  int evaluations = 0;
  CoordinationResult at_opt;  // coordination result of the best-seen candidate
};

/// Derivative-free set-point search: compass pattern over the box with a
/// shrinking step, scored by evaluate_setpoint. Deterministic given the
/// start point and configuration; returns the best candidate seen.
/// Non-converged coordination marks a candidate as unusable; if every
/// candidate is unusable the search fails.
inline SetpointSearchResult optimize_setpoints(AgentNetwork& net, const CoordinationInputs& in,
                                               const Eigen::VectorXd& r0,
                                               const Eigen::VectorXd& r_lo,
                                               const Eigen::VectorXd& r_hi,
                                               const FixedPointConfig& fp_cfg = {},
                                               const CompassConfig& cfg = {}) {
  cfg.validate();
  const Eigen::Index d = r0.size();
  if (r_lo.size() != d || r_hi.size() != d || (r_lo.array() > r_hi.array()).any()) {
    throw std::invalid_argument("optimize_setpoints: inconsistent set-point box");
  }
  if (((r0.array() < r_lo.array()) || (r0.array() > r_hi.array())).any()) {
    throw std::invalid_argument("optimize_setpoints: start point outside the box");
  }

  SetpointSearchResult best;
  best.j_opt = std::numeric_limits<double>::infinity();
  int evals = 0;
  int usable = 0;
  Eigen::VectorXd v_seed;  // fixed-point warm start carried from the incumbent

  auto score = [&](const Eigen::VectorXd& r) -> double {
    const Eigen::VectorXd* seed = v_seed.size() > 0 ? &v_seed : nullptr;
    CoordinationResult res = evaluate_setpoint(net, r, in, fp_cfg, seed);
    ++evals;
    if (!res.converged) return std::numeric_limits<double>::infinity();
    ++usable;
    const double j = res.j_c;
    if (j < best.j_opt) {
      best.j_opt = j;
      best.r_opt = r;
      v_seed = res.v_in_star;
      best.at_opt = std::move(res);
    }
    return j;
  };

  Eigen::VectorXd r = r0;
  double j_r = score(r);

  Eigen::VectorXd step = cfg.initial_step_frac * (r_hi - r_lo);
  const Eigen::VectorXd step_floor = cfg.min_step_frac * (r_hi - r_lo);
  while (evals < cfg.budget && (step.array() > step_floor.array()).any()) {
    bool improved = false;
    for (Eigen::Index axis = 0; axis < d && evals < cfg.budget; ++axis) {
      for (double sgn : {+1.0, -1.0}) {
        if (evals >= cfg.budget) break;
        Eigen::VectorXd cand = r;
        cand[axis] = std::clamp(cand[axis] + sgn * step[axis], r_lo[axis], r_hi[axis]);
        if (cand[axis] == r[axis]) continue;  // clamped onto the incumbent, nothing new
        const double j_cand = score(cand);
        if (j_cand < j_r) {
          r = cand;
          j_r = j_cand;
          improved = true;
          break;  // move immediately, re-poll around the new incumbent
        }
      }
    }
    if (!improved) step *= cfg.shrink;
  }

  if (usable == 0) {
    throw std::runtime_error("optimize_setpoints: no candidate reached a converged fixed point in " +
                             std::to_string(evals) + " evaluations");
  }
  best.evaluations = evals;
  return best;
}

/// Shifts every per-edge time-major block of a stacked incoming profile by
/// `steps`, repeating the final entry: the warm start for the next control
/// period.
inline Eigen::VectorXd shift_incoming_stack(const Eigen::VectorXd& v, const TopologyIndex& ix,
                                            int steps) {
  if (v.size() != ix.stack_len()) {
    throw std::invalid_argument("shift_incoming_stack: stacked length mismatch");
  }
  if (steps <= 0) return v;
  const auto& edges = ix.topology().edges;
  const int n = ix.horizon();
  Eigen::VectorXd out(v.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const int d = edges[e].dim;
    const Eigen::Index off = ix.in_offset(static_cast<int>(e));
    for (int k = 0; k < n; ++k) {
      const int src = std::min(k + steps, n - 1);
      out.segment(off + static_cast<Eigen::Index>(k) * d, d) =
          v.segment(off + static_cast<Eigen::Index>(src) * d, d);
    }
  }
  return out;
}

}  // namespace hierax
