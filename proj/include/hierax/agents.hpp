#pragma once

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <stdexcept>
#include <utility>

#include "hierax/fastgrad.hpp"
#include "hierax/model.hpp"
#include "hierax/profile.hpp"

namespace hierax {

/// What one subsystem reports back to the coordinator for a candidate
/// (set-point, incoming-coupling) pair.
struct AgentResult {
  Profile u;       // control profile, step dimension 0 for uncontrolled subsystems
  Profile v_out;   // outgoing coupling profile
  double j_s = 0.0;
  int iterations = 0;
  double solve_seconds = 0.0;
  bool solver_converged = true;
};

/// One subsystem's side of the coordination protocol: given its set-point,
/// current state, incoming coupling profile and disturbance preview, it
/// produces a control decision (if any), the resulting outgoing profile and
/// its local cost. Agents may keep warm-start state between calls, so a
/// single agent instance must not be shared across concurrent sweeps.
class Agent {
 public:
  virtual ~Agent() = default;

  virtual int subsystem() const = 0;
  virtual int setpoint_dim() const { return 0; }
  bool is_controlled() const { return setpoint_dim() > 0; }

  virtual AgentResult evaluate(const Eigen::VectorXd& r_s, const Eigen::VectorXd& x_s,
                               const Profile& v_in, const Profile& w) = 0;

  /// Drops accumulated warm-start state (start of a fresh experiment).
  virtual void reset() {}
  /// Shifts warm-start state by `steps` plant steps between control periods.
  virtual void advance(int steps) { (void)steps; }
};

namespace detail {

inline Profile shift_profile(const Profile& p, int steps) {
  if (steps <= 0 || p.horizon() == 0) return p;
  Profile out(p.horizon(), p.step_dim());
  for (int k = 0; k < p.horizon(); ++k) {
    out.step(k) = p.step(std::min(k + steps, p.horizon() - 1));
  }
  return out;
}

}  // namespace detail

/// A model-based local controller: solves the frozen local NMPC instance with
/// the truncated fast gradient, or with the converged reference when
/// configured as the exact variant.
class NmpcAgent final : public Agent {
 public:
  enum class Kind { truncated, exact };

  /// Observer invoked after every solve with (r_s, x_s, v_in, w, result);
  /// the data-collection pipeline and the benchmarks hook in here.
  using SolveObserver = std::function<void(const Eigen::VectorXd&, const Eigen::VectorXd&,
                                           const Profile&, const Profile&, const AgentResult&)>;

  NmpcAgent(int subsystem, std::shared_ptr<const SubsystemModel> model, LocalCostSpec cost,
            Eigen::VectorXd u_lo, Eigen::VectorXd u_hi, int horizon, Kind kind = Kind::truncated)
      : subsystem_(subsystem),
        model_(std::move(model)),
        cost_(std::move(cost)),
        u_lo_(std::move(u_lo)),
        u_hi_(std::move(u_hi)),
        horizon_(horizon),
        kind_(kind) {
    if (!model_) throw std::invalid_argument("NmpcAgent: missing model");
    if (model_->input_dim() < 1) throw std::invalid_argument("NmpcAgent: subsystem has no inputs");
  }

  int subsystem() const override { return subsystem_; }
  int setpoint_dim() const override { return model_->output_dim(); }

  SolverConfig& solver_config() { return solver_cfg_; }
  OracleConfig& oracle_config() { return oracle_cfg_; }
  void set_warm_start(bool on) { warm_start_ = on; }
  void set_observer(SolveObserver obs) { observer_ = std::move(obs); }
  Kind kind() const { return kind_; }

  AgentResult evaluate(const Eigen::VectorXd& r_s, const Eigen::VectorXd& x_s,
                       const Profile& v_in, const Profile& w) override {
    LocalProblem prob;
    prob.model = model_.get();
    prob.x0 = x_s;
    prob.r_s = r_s;
    prob.v_in = v_in;
    prob.w = w;
    prob.u_lo = u_lo_;
    prob.u_hi = u_hi_;
    prob.cost = cost_;
    prob.horizon = horizon_;

    const Eigen::VectorXd* warm = (warm_start_ && warm_u_.size() > 0) ? &warm_u_ : nullptr;
    SolveReport rep;
    if (kind_ == Kind::truncated) {
      SolverConfig cfg = solver_cfg_;
      cfg.warm_start = warm_start_;
      rep = solve(prob, cfg, warm);
    } else {
      rep = solve_oracle(prob, oracle_cfg_, warm);
    }
    if (warm_start_) warm_u_ = rep.u_star;

    AgentResult out;
    out.u = prob.as_profile(rep.u_star);
    const RolloutResult roll = rollout(*model_, x_s, out.u, v_in, w);
    out.v_out = roll.v_out;
    out.j_s = rep.j_final;
    out.iterations = rep.iterations;
    out.solve_seconds = rep.wall_seconds;
    out.solver_converged = rep.converged;
    if (observer_) observer_(r_s, x_s, v_in, w, out);
    return out;
  }

  void reset() override { warm_u_.resize(0); }

  void advance(int steps) override {
    if (warm_u_.size() == 0) return;
    warm_u_ = detail::shift_profile(Profile(horizon_, model_->input_dim(), warm_u_), steps).data();
  }

 private:
  int subsystem_;
  std::shared_ptr<const SubsystemModel> model_;
  LocalCostSpec cost_;
  Eigen::VectorXd u_lo_, u_hi_;
  int horizon_;
  Kind kind_;
  SolverConfig solver_cfg_;
  OracleConfig oracle_cfg_;
  bool warm_start_ = false;
  Eigen::VectorXd warm_u_;
  SolveObserver observer_;
};

/// An uncontrolled subsystem: nothing to decide, just roll the model forward
/// and report the outgoing profile plus the local cost (zero or constraint
/// violation, per its cost spec).
class RolloutAgent final : public Agent {
 public:
  RolloutAgent(int subsystem, std::shared_ptr<const SubsystemModel> model, LocalCostSpec cost)
      : subsystem_(subsystem), model_(std::move(model)), cost_(std::move(cost)) {
    if (!model_) throw std::invalid_argument("RolloutAgent: missing model");
    if (model_->input_dim() != 0) {
      throw std::invalid_argument("RolloutAgent: subsystem has inputs but no controller");
    }
  }

  int subsystem() const override { return subsystem_; }

  AgentResult evaluate(const Eigen::VectorXd&, const Eigen::VectorXd& x_s, const Profile& v_in,
                       const Profile& w) override {
    AgentResult out;
    out.u = Profile(v_in.horizon(), 0);
    const RolloutResult roll = rollout(*model_, x_s, out.u, v_in, w);
    out.v_out = roll.v_out;
    out.j_s = local_cost(cost_, roll.y, out.u, Eigen::VectorXd());
    return out;
  }

 private:
  int subsystem_;
  std::shared_ptr<const SubsystemModel> model_;
  LocalCostSpec cost_;
};

/// Synthetic agent whose outgoing profile is an affine map of the incoming
/// one, v_out = A v_in + b over the stacked per-agent profiles. Used to build
/// coupling networks with a known fixed point.
class AffineAgent final : public Agent {
 public:
  AffineAgent(int subsystem, Eigen::MatrixXd a, Eigen::VectorXd b, int horizon, int n_vin,
              int n_vout)
      : subsystem_(subsystem),
        a_(std::move(a)),
        b_(std::move(b)),
        horizon_(horizon),
        n_vin_(n_vin),
        n_vout_(n_vout) {
    if (a_.rows() != static_cast<Eigen::Index>(horizon) * n_vout ||
        a_.cols() != static_cast<Eigen::Index>(horizon) * n_vin || b_.size() != a_.rows()) {
      throw std::invalid_argument("AffineAgent: map dimensions inconsistent with profiles");
    }
  }

  int subsystem() const override { return subsystem_; }

  AgentResult evaluate(const Eigen::VectorXd&, const Eigen::VectorXd&, const Profile& v_in,
                       const Profile&) override {
    AgentResult out;
    out.u = Profile(horizon_, 0);
    out.v_out = Profile(horizon_, n_vout_, a_ * v_in.data() + b_);
    return out;
  }

  const Eigen::MatrixXd& a() const { return a_; }
  const Eigen::VectorXd& b() const { return b_; }

 private:
  int subsystem_;
  Eigen::MatrixXd a_;
  Eigen::VectorXd b_;
  int horizon_;
  int n_vin_, n_vout_;
};

}  // namespace hierax
