#pragma once

#include <Eigen/Dense>

#include <chrono>
#include <memory>
#include <stdexcept>
#include <utility>

#include "hierax/agents.hpp"
#include "hierax/mlp.hpp"
#include "hierax/model.hpp"
#include "hierax/profile.hpp"

namespace hierax {

/// Feature vector the control surrogate is trained on and queried with:
/// current state, set-point, then the incoming-coupling and disturbance
/// previews flattened time-major. Dataset assembly and inference must agree
/// on this order, so both go through here.
inline Eigen::VectorXd surrogate_input(const Eigen::VectorXd& x_s, const Eigen::VectorXd& r_s,
                                       const Profile& v_in, const Profile& w) {
  Eigen::VectorXd z(x_s.size() + r_s.size() + v_in.size() + w.size());
  z << x_s, r_s, v_in.data(), w.data();
  return z;
}

inline int surrogate_input_dim(const SubsystemModel& model, int horizon) {
  return model.state_dim() + model.output_dim() +
         horizon * (model.coupling_in_dim() + model.disturbance_dim());
}

/// Network output reshaped into a control profile and clipped to the
/// actuator box; the solver it imitates never leaves the box, the network
/// has no such guarantee.
inline Profile surrogate_control(const MlpParams& params, const Eigen::VectorXd& x_s,
                                 const Eigen::VectorXd& r_s, const Profile& v_in, const Profile& w,
                                 const Eigen::VectorXd& u_lo, const Eigen::VectorXd& u_hi,
                                 int horizon) {
  const Eigen::VectorXd raw = mlp_forward(params, surrogate_input(x_s, r_s, v_in, w));
  const int n_u = static_cast<int>(u_lo.size());
  if (raw.size() != static_cast<Eigen::Index>(horizon) * n_u) {
    throw std::invalid_argument("surrogate_control: network output is not a control profile");
  }
  Profile u(horizon, n_u, raw);
  for (int k = 0; k < horizon; ++k) {
    u.step(k) = u.step(k).cwiseMax(u_lo).cwiseMin(u_hi);
  }
  return u;
}

/// Drop-in replacement for a local NMPC agent: one network forward pass per
/// coordination sweep instead of an optimization run. Reports the pass (plus
/// box clipping) as its solve time; the model rollout that produces v_out is
/// bookkeeping shared with every other agent kind and is not counted.
class SurrogateAgent final : public Agent {
 public:
  SurrogateAgent(int subsystem, std::shared_ptr<const SubsystemModel> model, LocalCostSpec cost,
                 Eigen::VectorXd u_lo, Eigen::VectorXd u_hi, int horizon, MlpParams params)
      : subsystem_(subsystem),
        model_(std::move(model)),
        cost_(std::move(cost)),
        u_lo_(std::move(u_lo)),
        u_hi_(std::move(u_hi)),
        horizon_(horizon),
        params_(std::move(params)) {
    if (!model_) throw std::invalid_argument("SurrogateAgent: missing model");
    if (model_->input_dim() < 1) {
      throw std::invalid_argument("SurrogateAgent: subsystem has no inputs");
    }
    params_.validate();
    if (params_.input_dim() != surrogate_input_dim(*model_, horizon_)) {
      throw std::invalid_argument("SurrogateAgent: network input dim does not match subsystem");
    }
    if (params_.output_dim() != horizon_ * model_->input_dim()) {
      throw std::invalid_argument("SurrogateAgent: network output dim is not a control profile");
    }
  }

  int subsystem() const override { return subsystem_; }
  int setpoint_dim() const override { return model_->output_dim(); }
  const MlpParams& params() const { return params_; }

  AgentResult evaluate(const Eigen::VectorXd& r_s, const Eigen::VectorXd& x_s,
                       const Profile& v_in, const Profile& w) override {
    AgentResult out;
    const auto t0 = std::chrono::steady_clock::now();
    out.u = surrogate_control(params_, x_s, r_s, v_in, w, u_lo_, u_hi_, horizon_);
    out.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const RolloutResult roll = rollout(*model_, x_s, out.u, v_in, w);
    out.v_out = roll.v_out;
    out.j_s = local_cost(cost_, roll.y, out.u, r_s);
    out.iterations = 0;
    out.solver_converged = true;
    return out;
  }

 private:
  int subsystem_;
  std::shared_ptr<const SubsystemModel> model_;
  LocalCostSpec cost_;
  Eigen::VectorXd u_lo_, u_hi_;
  int horizon_;
  MlpParams params_;
};

}  // namespace hierax
