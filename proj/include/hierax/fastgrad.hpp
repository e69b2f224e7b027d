#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

#include "hierax/model.hpp"
#include "hierax/profile.hpp"

namespace hierax {

/// Componentwise box. Infinite entries are allowed and disable the clamp on
/// that component.
struct Box {
  Eigen::VectorXd lo, hi;

  void validate() const {
    if (lo.size() != hi.size()) throw std::invalid_argument("Box: lo/hi size mismatch");
    if ((lo.array() > hi.array()).any()) throw std::invalid_argument("Box: lo > hi");
  }

  /// Repeats a per-step box over a horizon.
  static Box tile(const Eigen::VectorXd& lo_step, const Eigen::VectorXd& hi_step, int horizon) {
    Box b;
    b.lo = lo_step.replicate(horizon, 1);
    b.hi = hi_step.replicate(horizon, 1);
    return b;
  }
};

inline Eigen::VectorXd project_box(const Eigen::VectorXd& p, const Box& bounds) {
  return p.cwiseMax(bounds.lo).cwiseMin(bounds.hi);
}

struct SolverConfig {
  int n_max = 50;          // fixed iteration budget
  int n_rstr = 5;          // restart period for the momentum term
  double momentum = 0.9;   // c in (0,1)
  // Step size for the very first update, before the first secant estimate is
  // available. Should be of the order of an inverse curvature; too large a
  // value leaves the unprojected z-sequence far outside the box and the next
  // momentum term then kicks the iterate across it.
  double gamma0 = 1e-3;
  double gamma_min = 1e-8;
  double gamma_max = 1e2;
  double pg_tol = 0.0;     // optional early exit on the projected-gradient step norm; 0 disables
  bool warm_start = false; // closed loop: shift previous solution instead of starting at 0

  void validate() const {
    if (n_max < 1) throw std::invalid_argument("SolverConfig: n_max < 1");
    if (n_rstr < 1) throw std::invalid_argument("SolverConfig: n_rstr < 1");
    if (!(momentum > 0.0 && momentum < 1.0)) throw std::invalid_argument("SolverConfig: momentum outside (0,1)");
    if (!(gamma0 > 0.0 && gamma0 < 1.0)) throw std::invalid_argument("SolverConfig: gamma0 outside (0,1)");
    if (!(gamma_min > 0.0 && gamma_min <= gamma_max)) {
      throw std::invalid_argument("SolverConfig: bad step-size clamps");
    }
  }
};

struct SolveReport {
  Eigen::VectorXd u_star;
  double j_final = 0.0;
  int iterations = 0;
  double grad_norm_final = 0.0;  // inf-norm of the projected-gradient step at exit
  double wall_seconds = 0.0;
  bool converged = true;  // oracle only: false when the iteration cap was hit
};

/// Barzilai-Borwein step from successive iterate/gradient differences,
/// |du.dg| / ||dg||^2, clamped. Falls back to the previous step when the
/// denominator degenerates.
inline double bb_step(const Eigen::VectorXd& delta_u, const Eigen::VectorXd& delta_g,
                      const SolverConfig& cfg, double gamma_prev) {
  if (delta_u.size() != delta_g.size()) throw std::invalid_argument("bb_step: length mismatch");
  const double den = delta_g.squaredNorm();
  if (den < 1e-30) return gamma_prev;
  const double gamma = std::abs(delta_u.dot(delta_g)) / den;
  return std::clamp(gamma, cfg.gamma_min, cfg.gamma_max);
}

namespace detail {

inline double pg_step_norm(const Eigen::VectorXd& u, const Eigen::VectorXd& g, double gamma,
                           const Box& box) {
  return (u - project_box(u - gamma * g, box)).lpNorm<Eigen::Infinity>();
}

template <class Objective>
void check_finite_gradient(const Eigen::VectorXd& g, int iteration) {
  if (!g.allFinite()) {
    throw std::runtime_error("fast gradient: non-finite gradient at iteration " +
                             std::to_string(iteration));
  }
}

}  // namespace detail

/// Truncated fast gradient: projected accelerated gradient with BB step size
/// and periodic restart, run for a fixed iteration budget. `Objective` must
/// provide value(u) and gradient(u).
template <class Objective>
SolveReport minimize(const Objective& obj, const Box& box, const SolverConfig& cfg,
                     const Eigen::VectorXd& u_init) {
  cfg.validate();
  box.validate();
  const auto t0 = std::chrono::steady_clock::now();

  Eigen::VectorXd u = project_box(u_init, box);
  Eigen::VectorXd z = u;
  Eigen::VectorXd g = obj.gradient(u);
  detail::check_finite_gradient<Objective>(g, 0);
  double gamma = cfg.gamma0;

  SolveReport rep;
  int done = 0;
  for (int i = 0; i < cfg.n_max; ++i) {
    const Eigen::VectorXd z_next = u - gamma * g;
    Eigen::VectorXd u_next;
    if (i % cfg.n_rstr == 0) {
      u_next = project_box(z_next, box);  // restart: drop the momentum term
    } else {
      u_next = project_box(z_next + cfg.momentum * (z_next - z), box);
    }
    Eigen::VectorXd g_next = obj.gradient(u_next);
    detail::check_finite_gradient<Objective>(g_next, i + 1);
    gamma = bb_step(u_next - u, g_next - g, cfg, gamma);
    z = z_next;
    u = std::move(u_next);
    g = std::move(g_next);
    done = i + 1;
    if (cfg.pg_tol > 0.0 && detail::pg_step_norm(u, g, gamma, box) <= cfg.pg_tol) break;
  }

  rep.u_star = u;
  rep.iterations = done;
  rep.j_final = obj.value(u);
  if (!std::isfinite(rep.j_final)) {
    throw std::runtime_error("fast gradient: non-finite cost at final iterate");
  }
  rep.grad_norm_final = detail::pg_step_norm(u, g, gamma, box);
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

struct OracleConfig {
  double tol = 1e-9;          // projected-gradient step tolerance
  long max_iterations = 100000;
  double armijo_c = 1e-4;
  int max_backtracks = 60;
};

/// Converged reference: projected gradient with a BB trial step and Armijo
/// backtracking, run until the projected-gradient step norm drops below tol.
template <class Objective>
SolveReport minimize_oracle(const Objective& obj, const Box& box, const OracleConfig& cfg,
                            const Eigen::VectorXd& u_init) {
  box.validate();
  const auto t0 = std::chrono::steady_clock::now();

  Eigen::VectorXd u = project_box(u_init, box);
  double j = obj.value(u);
  Eigen::VectorXd g = obj.gradient(u);
  detail::check_finite_gradient<Objective>(g, 0);
  double gamma = 1.0;

  SolveReport rep;
  rep.converged = false;
  long it = 0;
  for (; it < cfg.max_iterations; ++it) {
    const double m = detail::pg_step_norm(u, g, gamma, box);
    if (m <= cfg.tol) {
      rep.converged = true;
      break;
    }
    double t = gamma;
    Eigen::VectorXd u_trial;
    double j_trial = j;
    bool accepted = false;
    for (int b = 0; b < cfg.max_backtracks; ++b) {
      u_trial = project_box(u - t * g, box);
      const double decrement = g.dot(u_trial - u);
      if (decrement >= 0.0) break;  // no feasible descent along -g at this scale
      j_trial = obj.value(u_trial);
      if (j_trial <= j + cfg.armijo_c * decrement) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) break;  // stalled at numerical precision

    Eigen::VectorXd g_trial = obj.gradient(u_trial);
    detail::check_finite_gradient<Objective>(g_trial, static_cast<int>(it) + 1);
    const Eigen::VectorXd du = u_trial - u;
    const Eigen::VectorXd dg = g_trial - g;
    const double den = dg.squaredNorm();
    if (den > 1e-30) gamma = std::clamp(std::abs(du.dot(dg)) / den, 1e-12, 1e3);
    u = std::move(u_trial);
    g = std::move(g_trial);
    j = j_trial;
  }

  rep.u_star = u;
  rep.iterations = static_cast<int>(it);
  rep.j_final = j;
  rep.grad_norm_final = detail::pg_step_norm(u, g, gamma, box);
  rep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// One subsystem's frozen NMPC instance: everything except the decision
/// profile u is fixed for the duration of a solve.
struct LocalProblem {
  const SubsystemModel* model = nullptr;
  Eigen::VectorXd x0;
  Eigen::VectorXd r_s;     // set-point (tracking cost); may be empty otherwise
  Profile v_in;            // time-major incoming coupling profile
  Profile w;               // time-major disturbance profile
  Eigen::VectorXd u_lo, u_hi;  // per-step input box
  LocalCostSpec cost;
  int horizon = 0;

  void validate() const {
    if (model == nullptr) throw std::invalid_argument("LocalProblem: missing model");
    if (horizon < 1) throw std::invalid_argument("LocalProblem: horizon < 1");
    if (x0.size() != model->state_dim()) throw std::invalid_argument("LocalProblem: x0 size");
    if (v_in.horizon() != horizon || w.horizon() != horizon) {
      throw std::invalid_argument("LocalProblem: profile horizon mismatch");
    }
    if (v_in.step_dim() != model->coupling_in_dim() || w.step_dim() != model->disturbance_dim()) {
      throw std::invalid_argument("LocalProblem: profile step dimension mismatch");
    }
    if (u_lo.size() != model->input_dim() || u_hi.size() != model->input_dim()) {
      throw std::invalid_argument("LocalProblem: input box dimension mismatch");
    }
    if ((u_lo.array() > u_hi.array()).any()) throw std::invalid_argument("LocalProblem: u_lo > u_hi");
    cost.validate(model->output_dim(), model->input_dim());
  }

  Box stacked_box() const { return Box::tile(u_lo, u_hi, horizon); }

  Profile as_profile(const Eigen::VectorXd& u_flat) const {
    return Profile(horizon, model->input_dim(), u_flat);
  }
};

/// Cost of a stacked control profile for a frozen local problem.
inline double local_problem_cost(const LocalProblem& prob, const Eigen::VectorXd& u_flat) {
  const Profile u = prob.as_profile(u_flat);
  const RolloutResult roll = rollout(*prob.model, prob.x0, u, prob.v_in, prob.w);
  return local_cost(prob.cost, roll.y, u, prob.r_s);
}

/// Gradient of the local cost over the stacked control profile, computed by
/// the reverse-mode adjoint recursion through the rollout.
inline Eigen::VectorXd grad_local_cost(const LocalProblem& prob, const Eigen::VectorXd& u_flat) {
  const int n = prob.horizon;
  const int n_u = prob.model->input_dim();
  if (u_flat.size() != static_cast<Eigen::Index>(n) * n_u) {
    throw std::invalid_argument("grad_local_cost: control profile length mismatch");
  }
  const Profile u = prob.as_profile(u_flat);
  const RolloutResult roll = rollout(*prob.model, prob.x0, u, prob.v_in, prob.w);

  Eigen::VectorXd grad(u_flat.size());
  Eigen::VectorXd lambda = Eigen::VectorXd::Zero(prob.model->state_dim());
  for (int k = n - 1; k >= 0; --k) {
    const StepJacobians jac =
        prob.model->linearize(roll.x_traj.col(k), u.step(k), prob.v_in.step(k), prob.w.step(k));
    const Eigen::VectorXd gy = stage_cost_dy(prob.cost, roll.y.step(k), prob.r_s);
    grad.segment(static_cast<Eigen::Index>(k) * n_u, n_u) =
        stage_cost_du(prob.cost, u.step(k)) + jac.dy_du.transpose() * gy +
        jac.dxnext_du.transpose() * lambda;
    lambda = jac.dy_dx.transpose() * gy + jac.dxnext_dx.transpose() * lambda;
  }
  return grad;
}

namespace detail {

struct LocalObjective {
  const LocalProblem* prob;
  double value(const Eigen::VectorXd& u) const { return local_problem_cost(*prob, u); }
  Eigen::VectorXd gradient(const Eigen::VectorXd& u) const { return grad_local_cost(*prob, u); }
};

}  // namespace detail

/// Truncated fast gradient on a local NMPC instance. Cold start at 0 unless
/// the config enables warm starting and a previous profile is supplied.
inline SolveReport solve(const LocalProblem& prob, const SolverConfig& cfg,
                         const Eigen::VectorXd* u_warm = nullptr) {
  prob.validate();
  detail::LocalObjective obj{&prob};
  Eigen::VectorXd u0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(prob.horizon) *
                                             prob.model->input_dim());
  if (cfg.warm_start && u_warm != nullptr && u_warm->size() == u0.size()) u0 = *u_warm;
  return minimize(obj, prob.stacked_box(), cfg, u0);
}

/// Converged reference solve for the same instance. A warm-start profile only
/// changes the path, not the answer, so it is accepted unconditionally here.
inline SolveReport solve_oracle(const LocalProblem& prob, const OracleConfig& cfg = {},
                                const Eigen::VectorXd* u_warm = nullptr) {
  prob.validate();
  detail::LocalObjective obj{&prob};
  Eigen::VectorXd u0 = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(prob.horizon) *
                                             prob.model->input_dim());
  if (u_warm != nullptr && u_warm->size() == u0.size()) u0 = *u_warm;
  return minimize_oracle(obj, prob.stacked_box(), cfg, u0);
}

}  // namespace hierax
