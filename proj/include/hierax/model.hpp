#pragma once

#include <Eigen/Dense>

#include <limits>
#include <memory>
#include <stdexcept>

#include "hierax/profile.hpp"

namespace hierax {

struct StepResult {
  Eigen::VectorXd x_next;
  Eigen::VectorXd y;
  Eigen::VectorXd v_out;
};

/// First-order sensitivities of one step, used by the adjoint recursion.
/// dy_du is kept for generality; the benchmark models have no direct
/// input-to-output feedthrough.
struct StepJacobians {
  Eigen::MatrixXd dxnext_dx;
  Eigen::MatrixXd dxnext_du;
  Eigen::MatrixXd dy_dx;
  Eigen::MatrixXd dy_du;
};

/// One subsystem as a deterministic black box: given state, input, incoming
/// coupling and disturbance for a step, produce the next state, the output
/// and the outgoing coupling.
class SubsystemModel {
 public:
  virtual ~SubsystemModel() = default;

  virtual int state_dim() const = 0;
  virtual int input_dim() const = 0;
  virtual int output_dim() const = 0;
  virtual int coupling_in_dim() const = 0;   // per-step stacked incoming dimension
  virtual int coupling_out_dim() const = 0;  // per-step stacked outgoing dimension
  virtual int disturbance_dim() const = 0;

  bool is_controlled() const { return input_dim() > 0; }

  virtual StepResult step(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                          const Eigen::VectorXd& v_in, const Eigen::VectorXd& w) const = 0;

  virtual StepJacobians linearize(const Eigen::VectorXd& x, const Eigen::VectorXd& u,
                                  const Eigen::VectorXd& v_in, const Eigen::VectorXd& w) const = 0;

  void check_dims(const Eigen::VectorXd& x, const Eigen::VectorXd& u, const Eigen::VectorXd& v_in,
                  const Eigen::VectorXd& w) const {
    if (x.size() != state_dim() || u.size() != input_dim() || v_in.size() != coupling_in_dim() ||
        w.size() != disturbance_dim()) {
      throw std::invalid_argument("SubsystemModel: argument dimension mismatch");
    }
  }
};

struct RolloutResult {
  Profile y;      // N x n_y
  Profile v_out;  // N x n_vout, time-major
  Eigen::MatrixXd x_traj;  // n_x x (N+1), column k is x(k)
};

/// Iterates `step` from x0 over the shared horizon. All profiles are
/// time-major; v_in_prof stacks the incoming edges per step in block order.
inline RolloutResult rollout(const SubsystemModel& model, const Eigen::VectorXd& x0,
                             const Profile& u_prof, const Profile& v_in_prof,
                             const Profile& w_prof) {
  const int n = v_in_prof.horizon();
  if (u_prof.horizon() != n || w_prof.horizon() != n) {
    throw std::invalid_argument("rollout: profiles disagree on horizon");
  }
  if (x0.size() != model.state_dim() || u_prof.step_dim() != model.input_dim() ||
      v_in_prof.step_dim() != model.coupling_in_dim() ||
      w_prof.step_dim() != model.disturbance_dim()) {
    throw std::invalid_argument("rollout: profile step dimension mismatch");
  }
  RolloutResult out{Profile(n, model.output_dim()), Profile(n, model.coupling_out_dim()),
                    Eigen::MatrixXd(model.state_dim(), n + 1)};
  Eigen::VectorXd x = x0;
  out.x_traj.col(0) = x;
  for (int k = 0; k < n; ++k) {
    StepResult r = model.step(x, u_prof.step(k), v_in_prof.step(k), w_prof.step(k));
    out.y.step(k) = r.y;
    out.v_out.step(k) = r.v_out;
    x = r.x_next;
    out.x_traj.col(k + 1) = x;
  }
  return out;
}

enum class CostKind { tracking, constraint, zero };

/// Per-subsystem stage cost specification. Q and R are diagonals of the
/// (diagonal, PSD) weight matrices.
struct LocalCostSpec {
  CostKind kind = CostKind::zero;
  Eigen::VectorXd q;      // output weight diagonal
  Eigen::VectorXd r;      // input weight diagonal
  Eigen::VectorXd y_bar;  // upper bounds, constraint kind only

  void validate(int n_y, int n_u) const {
    if (kind == CostKind::zero) return;
    if (q.size() != n_y) throw std::invalid_argument("LocalCostSpec: Q diagonal size != n_y");
    if ((q.array() < 0.0).any()) throw std::invalid_argument("LocalCostSpec: Q not PSD");
    if (kind == CostKind::tracking) {
      if (r.size() != n_u) throw std::invalid_argument("LocalCostSpec: R diagonal size != n_u");
      if ((r.array() < 0.0).any()) throw std::invalid_argument("LocalCostSpec: R not PSD");
    }
    if (kind == CostKind::constraint) {
      if (y_bar.size() != n_y) {
        throw std::invalid_argument("LocalCostSpec: constraint kind requires y_bar");
      }
      if (!y_bar.allFinite()) {
        throw std::invalid_argument("LocalCostSpec: constraint bound not finite");
      }
    }
  }
};

/// Horizon cost of one subsystem:
///   tracking:   sum_i ||y(i)-r_d||^2_Q + ||u(i)||^2_R
///   constraint: sum_i ||max(y(i)-y_bar,0)||^2_Q
///   zero:       0
inline double local_cost(const LocalCostSpec& spec, const Profile& y_prof, const Profile& u_prof,
                         const Eigen::VectorXd& r_d) {
  if (spec.kind == CostKind::zero) return 0.0;
  spec.validate(y_prof.step_dim(), u_prof.step_dim());
  double j = 0.0;
  for (int k = 0; k < y_prof.horizon(); ++k) {
    if (spec.kind == CostKind::tracking) {
      if (r_d.size() != y_prof.step_dim()) {
        throw std::invalid_argument("local_cost: set-point dimension mismatch");
      }
      const Eigen::VectorXd ey = y_prof.step(k) - r_d;
      j += ey.dot(spec.q.asDiagonal() * ey);
      const Eigen::VectorXd u = u_prof.step(k);
      j += u.dot(spec.r.asDiagonal() * u);
    } else {
      const Eigen::VectorXd ey = (y_prof.step(k) - spec.y_bar).cwiseMax(0.0);
      j += ey.dot(spec.q.asDiagonal() * ey);
    }
  }
  return j;
}

/// dJ/dy(k) for the stage term of `local_cost`. At the max(.,0) kink the
/// subgradient 0 is used; the squared hinge is C1 there.
inline Eigen::VectorXd stage_cost_dy(const LocalCostSpec& spec, const Eigen::VectorXd& y,
                                     const Eigen::VectorXd& r_d) {
  if (spec.kind == CostKind::zero) return Eigen::VectorXd::Zero(y.size());
  if (spec.kind == CostKind::tracking) return 2.0 * (spec.q.asDiagonal() * (y - r_d));
  return 2.0 * (spec.q.asDiagonal() * (y - spec.y_bar).cwiseMax(0.0).matrix());
}

/// dJ/du(k) for the stage term of `local_cost`.
inline Eigen::VectorXd stage_cost_du(const LocalCostSpec& spec, const Eigen::VectorXd& u) {
  if (spec.kind == CostKind::tracking) return 2.0 * (spec.r.asDiagonal() * u);
  return Eigen::VectorXd::Zero(u.size());
}

}  // namespace hierax
