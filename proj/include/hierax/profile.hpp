#pragma once

#include <Eigen/Dense>

#include <stdexcept>

namespace hierax {

/// A signal stacked over a prediction horizon of length N:
/// data = [p(0); p(1); ...; p(N-1)], each p(i) of dimension step_dim.
class Profile {
 public:
  Profile() = default;

  Profile(int horizon, int step_dim)
      : horizon_(horizon),
        step_dim_(step_dim),
        data_(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(horizon) * step_dim)) {
    if (horizon < 0 || step_dim < 0) {
      throw std::invalid_argument("Profile: negative horizon or step dimension");
    }
  }

  Profile(int horizon, int step_dim, Eigen::VectorXd data)
      : horizon_(horizon), step_dim_(step_dim), data_(std::move(data)) {
    if (data_.size() != static_cast<Eigen::Index>(horizon) * step_dim) {
      throw std::invalid_argument("Profile: data length != horizon * step_dim");
    }
  }

  int horizon() const { return horizon_; }
  int step_dim() const { return step_dim_; }
  Eigen::Index size() const { return data_.size(); }

  /// Contiguous slice for prediction step i, i in [0, N).
  Eigen::VectorBlock<Eigen::VectorXd> step(int i) {
    check_step(i);
    return data_.segment(static_cast<Eigen::Index>(i) * step_dim_, step_dim_);
  }
  Eigen::VectorBlock<const Eigen::VectorXd> step(int i) const {
    check_step(i);
    return data_.segment(static_cast<Eigen::Index>(i) * step_dim_, step_dim_);
  }

  Eigen::VectorXd& data() { return data_; }
  const Eigen::VectorXd& data() const { return data_; }

 private:
  void check_step(int i) const {
    if (i < 0 || i >= horizon_) throw std::out_of_range("Profile::step: index out of range");
  }

  int horizon_ = 0;
  int step_dim_ = 0;
  Eigen::VectorXd data_;
};

}  // namespace hierax
