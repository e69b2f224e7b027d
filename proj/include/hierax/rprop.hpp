#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

#include "hierax/mlp.hpp"
#include "hierax/rng.hpp"

namespace hierax {

struct RpropConfig {
  double eta_plus = 1.2;
  double eta_minus = 0.5;
  double delta0 = 0.01;
  double delta_min = 1e-8;
  double delta_max = 1.0;
  int epochs = 2000;
  double val_fraction = 0.2;  // share of records held out for validation
  std::uint64_t seed = 1;
  // multiplies the training loss before the sign-based update; exists to
  // demonstrate (and test) that the trajectory is invariant to it
  double loss_scale = 1.0;

  void validate() const {
    if (!(eta_minus < 1.0 && 1.0 < eta_plus)) {
      throw std::invalid_argument("RpropConfig: need eta_minus < 1 < eta_plus");
    }
    if (!(0.0 < delta_min && delta_min <= delta0 && delta0 <= delta_max)) {
      throw std::invalid_argument("RpropConfig: need 0 < delta_min <= delta0 <= delta_max");
    }
    if (epochs < 0) throw std::invalid_argument("RpropConfig: epochs < 0");
    if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
      throw std::invalid_argument("RpropConfig: val_fraction must be in (0,1)");
    }
    if (!(loss_scale > 0.0)) throw std::invalid_argument("RpropConfig: loss_scale must be positive");
  }
};

struct TrainResult {
  MlpParams params;               // best-validation checkpoint
  std::vector<double> train_mse;  // per epoch, at the epoch's start parameters
  std::vector<double> val_mse;    // per epoch, after the epoch's update
  int best_epoch = -1;            // index into val_mse; -1 when epochs == 0
  double best_val = std::numeric_limits<double>::infinity();
};

namespace detail {

/// Componentwise z-score statistics with a floor on the scale so constant
/// channels stay usable.
inline void normalization_from(const Eigen::MatrixXd& m, Eigen::VectorXd& offset,
                               Eigen::VectorXd& scale) {
  const double n = static_cast<double>(m.cols());
  offset = m.rowwise().mean();
  const Eigen::VectorXd var =
      (m.colwise() - offset).array().square().matrix().rowwise().sum() / n;
  scale = var.array().sqrt().max(1e-8).matrix();
}

}  // namespace detail

/// Full-batch iRPROP- on the half-sum-of-squares fit error: per-parameter
/// steps grow on consecutive sign agreement and shrink (with the gradient
/// zeroed) on a sign flip, so only gradient signs matter. Input/output
/// z-score normalization is computed on the training split and frozen into
/// the returned parameters. Deterministic for a fixed config.
inline TrainResult rprop_train(const Eigen::MatrixXd& z, const Eigen::MatrixXd& u,
                               const std::vector<int>& layer_sizes, const RpropConfig& cfg) {
  cfg.validate();
  if (z.cols() != u.cols()) throw std::invalid_argument("rprop_train: sample count mismatch");
  const Eigen::Index n = z.cols();
  if (n < 2) throw std::invalid_argument("rprop_train: need at least 2 records");
  if (layer_sizes.size() < 2 || layer_sizes.front() != z.rows() || layer_sizes.back() != u.rows()) {
    throw std::invalid_argument("rprop_train: layer sizes do not match the data");
  }

  // deterministic shuffled split
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(derive_seed(cfg.seed, 0));
  for (Eigen::Index i = n - 1; i > 0; --i) {
    std::swap(order[i], order[rng() % static_cast<std::uint64_t>(i + 1)]);
  }
  Eigen::Index n_val = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(
                                                     std::llround(cfg.val_fraction * n)));
  n_val = std::min(n_val, n - 1);
  const Eigen::Index n_train = n - n_val;

  Eigen::MatrixXd z_train(z.rows(), n_train), u_train(u.rows(), n_train);
  Eigen::MatrixXd z_val(z.rows(), n_val), u_val(u.rows(), n_val);
  for (Eigen::Index i = 0; i < n_train; ++i) {
    z_train.col(i) = z.col(order[i]);
    u_train.col(i) = u.col(order[i]);
  }
  for (Eigen::Index i = 0; i < n_val; ++i) {
    z_val.col(i) = z.col(order[n_train + i]);
    u_val.col(i) = u.col(order[n_train + i]);
  }

  TrainResult out;
  out.params = init_mlp(layer_sizes, derive_seed(cfg.seed, 1));
  detail::normalization_from(z_train, out.params.in_offset, out.params.in_scale);
  detail::normalization_from(u_train, out.params.out_offset, out.params.out_scale);

  MlpParams current = out.params;
  Eigen::VectorXd theta = flatten(current);
  Eigen::VectorXd delta = Eigen::VectorXd::Constant(theta.size(), cfg.delta0);
  Eigen::VectorXd g_prev = Eigen::VectorXd::Zero(theta.size());

  out.train_mse.reserve(cfg.epochs);
  out.val_mse.reserve(cfg.epochs);
  const double denom_train = static_cast<double>(u_train.size());

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    MlpGradient grad = mlp_gradient(current, z_train, u_train);
    if (!std::isfinite(grad.loss)) {
      throw std::runtime_error("rprop_train: non-finite loss at epoch " + std::to_string(epoch));
    }
    out.train_mse.push_back(2.0 * grad.loss / denom_train);
    Eigen::VectorXd g = cfg.loss_scale * grad.grad;

    for (Eigen::Index i = 0; i < theta.size(); ++i) {
      const double prod = g_prev[i] * g[i];
      if (prod > 0.0) {
        delta[i] = std::min(delta[i] * cfg.eta_plus, cfg.delta_max);
      } else if (prod < 0.0) {
        delta[i] = std::max(delta[i] * cfg.eta_minus, cfg.delta_min);
        g[i] = 0.0;  // iRPROP-: skip the update after a sign flip
      }
      if (g[i] > 0.0) {
        theta[i] -= delta[i];
      } else if (g[i] < 0.0) {
        theta[i] += delta[i];
      }
      g_prev[i] = g[i];
    }
    unflatten(theta, current);

    const double val = mlp_mse(current, z_val, u_val);
    if (!std::isfinite(val)) {
      throw std::runtime_error("rprop_train: non-finite loss at epoch " + std::to_string(epoch));
    }
    out.val_mse.push_back(val);
    if (val < out.best_val) {
      out.best_val = val;
      out.best_epoch = epoch;
      out.params = current;
    }
  }
  return out;
}

}  // namespace hierax
