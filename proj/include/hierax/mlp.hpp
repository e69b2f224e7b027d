#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hierax/rng.hpp"

namespace hierax {

/// Feed-forward network with sigmoid hidden layers and an affine output
/// layer, plus the input/output normalization frozen at training time.
/// Size chain: n_in -> hidden... -> n_out; weights[l] maps layer l to l+1.
struct MlpParams {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
  Eigen::VectorXd in_offset, in_scale;    // z score: (z - offset) / scale
  Eigen::VectorXd out_offset, out_scale;  // u = offset + scale .* raw output

  int input_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.front().cols()); }
  int output_dim() const { return weights.empty() ? 0 : static_cast<int>(weights.back().rows()); }
  int hidden_layers() const { return static_cast<int>(weights.size()) - 1; }

  std::vector<int> layer_sizes() const {
    std::vector<int> sizes;
    if (weights.empty()) return sizes;
    sizes.push_back(static_cast<int>(weights.front().cols()));
    for (const auto& w : weights) sizes.push_back(static_cast<int>(w.rows()));
    return sizes;
  }

  void validate() const {
    if (weights.empty() || weights.size() != biases.size()) {
      throw std::invalid_argument("MlpParams: need one bias per weight matrix");
    }
    for (std::size_t l = 0; l < weights.size(); ++l) {
      if (weights[l].rows() != biases[l].size()) {
        throw std::invalid_argument("MlpParams: bias length != layer width");
      }
      if (l > 0 && weights[l].cols() != weights[l - 1].rows()) {
        throw std::invalid_argument("MlpParams: inconsistent layer chain");
      }
      if (!weights[l].allFinite() || !biases[l].allFinite()) {
        throw std::invalid_argument("MlpParams: non-finite parameters");
      }
    }
    if (in_offset.size() != input_dim() || in_scale.size() != input_dim() ||
        out_offset.size() != output_dim() || out_scale.size() != output_dim()) {
      throw std::invalid_argument("MlpParams: normalization dimensions mismatch");
    }
    if ((in_scale.array() <= 0.0).any() || (out_scale.array() <= 0.0).any()) {
      throw std::invalid_argument("MlpParams: normalization scales must be positive");
    }
  }
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Identity normalization placeholder of the given dimensions.
inline void set_identity_normalization(MlpParams& p) {
  p.in_offset = Eigen::VectorXd::Zero(p.input_dim());
  p.in_scale = Eigen::VectorXd::Ones(p.input_dim());
  p.out_offset = Eigen::VectorXd::Zero(p.output_dim());
  p.out_scale = Eigen::VectorXd::Ones(p.output_dim());
}

/// Random initial parameters: uniform +-1/sqrt(fan_in) entries, identity
/// normalization (callers overwrite it from data). Deterministic per seed.
inline MlpParams init_mlp(const std::vector<int>& layer_sizes, std::uint64_t seed) {
  if (layer_sizes.size() < 2) throw std::invalid_argument("init_mlp: need at least in/out sizes");
  std::mt19937_64 rng(seed);
  MlpParams p;
  for (std::size_t l = 0; l + 1 < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l];
    const int fan_out = layer_sizes[l + 1];
    if (fan_in < 1 || fan_out < 1) throw std::invalid_argument("init_mlp: layer size < 1");
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i) {
      for (int j = 0; j < fan_in; ++j) w(i, j) = uniform_in(rng, -bound, bound);
    }
    Eigen::VectorXd b(fan_out);
    for (int i = 0; i < fan_out; ++i) b[i] = uniform_in(rng, -bound, bound);
    p.weights.push_back(std::move(w));
    p.biases.push_back(std::move(b));
  }
  set_identity_normalization(p);
  return p;
}

/// Batch forward pass: one column per sample, raw (denormalized) outputs.
inline Eigen::MatrixXd mlp_forward_batch(const MlpParams& p, const Eigen::MatrixXd& z) {
  p.validate();
  if (z.rows() != p.input_dim()) throw std::invalid_argument("mlp_forward: input dim mismatch");
  Eigen::MatrixXd a =
      (z.colwise() - p.in_offset).array().colwise() / p.in_scale.array();
  const int n_layers = static_cast<int>(p.weights.size());
  for (int l = 0; l < n_layers; ++l) {
    Eigen::MatrixXd h = (p.weights[l] * a).colwise() + p.biases[l];
    if (l + 1 < n_layers) {
      a = (1.0 + (-h.array()).exp()).inverse().matrix();
    } else {
      a = std::move(h);
    }
  }
  return (a.array().colwise() * p.out_scale.array()).matrix().colwise() + p.out_offset;
}

inline Eigen::VectorXd mlp_forward(const MlpParams& p, const Eigen::VectorXd& z) {
  return mlp_forward_batch(p, z);
}

/// Parameter vector layout used by the trainer and the gradient: for each
/// layer, the weight matrix column-major, then the bias.
inline Eigen::VectorXd flatten(const MlpParams& p) {
  Eigen::Index total = 0;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    total += p.weights[l].size() + p.biases[l].size();
  }
  Eigen::VectorXd theta(total);
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    theta.segment(off, p.weights[l].size()) =
        Eigen::Map<const Eigen::VectorXd>(p.weights[l].data(), p.weights[l].size());
    off += p.weights[l].size();
    theta.segment(off, p.biases[l].size()) = p.biases[l];
    off += p.biases[l].size();
  }
  return theta;
}

inline void unflatten(const Eigen::VectorXd& theta, MlpParams& p) {
  Eigen::Index off = 0;
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    Eigen::Map<Eigen::VectorXd>(p.weights[l].data(), p.weights[l].size()) =
        theta.segment(off, p.weights[l].size());
    off += p.weights[l].size();
    p.biases[l] = theta.segment(off, p.biases[l].size());
    off += p.biases[l].size();
  }
  if (off != theta.size()) throw std::invalid_argument("unflatten: parameter count mismatch");
}

struct MlpGradient {
  double loss = 0.0;       // 1/2 sum of squared output errors over the batch
  Eigen::VectorXd grad;    // d loss / d theta, flatten() layout
};

/// Exact reverse-mode gradient of the half-sum-of-squares fit error over a
/// batch (columns of z against columns of u, raw units).
inline MlpGradient mlp_gradient(const MlpParams& p, const Eigen::MatrixXd& z,
                                const Eigen::MatrixXd& u) {
  p.validate();
  if (z.cols() != u.cols() || z.cols() == 0) {
    throw std::invalid_argument("mlp_gradient: need matching, nonempty batches");
  }
  if (z.rows() != p.input_dim() || u.rows() != p.output_dim()) {
    throw std::invalid_argument("mlp_gradient: batch dimensions mismatch");
  }

  const int n_layers = static_cast<int>(p.weights.size());
  std::vector<Eigen::MatrixXd> acts(static_cast<std::size_t>(n_layers) + 1);
  acts[0] = (z.colwise() - p.in_offset).array().colwise() / p.in_scale.array();
  for (int l = 0; l < n_layers; ++l) {
    Eigen::MatrixXd h = (p.weights[l] * acts[l]).colwise() + p.biases[l];
    acts[l + 1] = (l + 1 < n_layers) ? (1.0 + (-h.array()).exp()).inverse().matrix() : h;
  }
  const Eigen::MatrixXd y =
      (acts.back().array().colwise() * p.out_scale.array()).matrix().colwise() + p.out_offset;
  const Eigen::MatrixXd err = y - u;

  MlpGradient out;
  out.loss = 0.5 * err.squaredNorm();
  out.grad.resize(flatten(p).size());

  // walk the layers backwards, writing each block straight into the flat
  // gradient at the same offsets flatten() uses
  std::vector<Eigen::Index> offsets(static_cast<std::size_t>(n_layers));
  Eigen::Index off = 0;
  for (int l = 0; l < n_layers; ++l) {
    offsets[l] = off;
    off += p.weights[l].size() + p.biases[l].size();
  }

  Eigen::MatrixXd delta = err.array().colwise() * p.out_scale.array();
  for (int l = n_layers - 1; l >= 0; --l) {
    const Eigen::MatrixXd gw = delta * acts[l].transpose();
    const Eigen::VectorXd gb = delta.rowwise().sum();
    out.grad.segment(offsets[l], p.weights[l].size()) =
        Eigen::Map<const Eigen::VectorXd>(gw.data(), gw.size());
    out.grad.segment(offsets[l] + p.weights[l].size(), gb.size()) = gb;
    if (l > 0) {
      delta = (p.weights[l].transpose() * delta).array() * acts[l].array() *
              (1.0 - acts[l].array());
    }
  }
  return out;
}

/// Columnwise mean squared error per scalar output element, raw units.
inline double mlp_mse(const MlpParams& p, const Eigen::MatrixXd& z, const Eigen::MatrixXd& u) {
  if (z.cols() == 0) return 0.0;
  const Eigen::MatrixXd y = mlp_forward_batch(p, z);
  return (y - u).squaredNorm() / static_cast<double>(u.size());
}

namespace detail {

inline nlohmann::json vec_to_json(const Eigen::VectorXd& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Eigen::VectorXd vec_from_json(const nlohmann::json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

}  // namespace detail

/// Self-describing structured-text encoding; numeric values survive a
/// save/load round trip bit-exactly.
inline nlohmann::json mlp_to_json(const MlpParams& p) {
  p.validate();
  nlohmann::json j;
  j["format"] = "hierax-mlp";
  j["version"] = 1;
  j["layer_sizes"] = p.layer_sizes();
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 0; l < p.weights.size(); ++l) {
    nlohmann::json layer;
    layer["rows"] = p.weights[l].rows();
    layer["cols"] = p.weights[l].cols();
    nlohmann::json wj = nlohmann::json::array();  // row-major for readability
    for (Eigen::Index r = 0; r < p.weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < p.weights[l].cols(); ++c) wj.push_back(p.weights[l](r, c));
    }
    layer["weights"] = std::move(wj);
    layer["bias"] = detail::vec_to_json(p.biases[l]);
    layers.push_back(std::move(layer));
  }
  j["layers"] = std::move(layers);
  j["normalization"] = {{"in_offset", detail::vec_to_json(p.in_offset)},
                        {"in_scale", detail::vec_to_json(p.in_scale)},
                        {"out_offset", detail::vec_to_json(p.out_offset)},
                        {"out_scale", detail::vec_to_json(p.out_scale)}};
  return j;
}

inline MlpParams mlp_from_json(const nlohmann::json& j) {
  if (!j.is_object() || j.value("format", "") != "hierax-mlp") {
    throw std::runtime_error("mlp_from_json: not a hierax-mlp document");
  }
  MlpParams p;
  for (const auto& layer : j.at("layers")) {
    const Eigen::Index rows = layer.at("rows").get<Eigen::Index>();
    const Eigen::Index cols = layer.at("cols").get<Eigen::Index>();
    const auto& wj = layer.at("weights");
    if (static_cast<Eigen::Index>(wj.size()) != rows * cols) {
      throw std::runtime_error("mlp_from_json: weight count mismatch");
    }
    Eigen::MatrixXd w(rows, cols);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) w(r, c) = wj[k++].get<double>();
    }
    p.weights.push_back(std::move(w));
    p.biases.push_back(detail::vec_from_json(layer.at("bias")));
  }
  const auto& norm = j.at("normalization");
  p.in_offset = detail::vec_from_json(norm.at("in_offset"));
  p.in_scale = detail::vec_from_json(norm.at("in_scale"));
  p.out_offset = detail::vec_from_json(norm.at("out_offset"));
  p.out_scale = detail::vec_from_json(norm.at("out_scale"));
  p.validate();
  return p;
}

inline void save_mlp(const MlpParams& p, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_mlp: cannot open " + path);
  out << mlp_to_json(p).dump(2) << '\n';
}

inline MlpParams load_mlp(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_mlp: cannot open " + path);
  nlohmann::json j;
  in >> j;
  return mlp_from_json(j);
}

}  // namespace hierax
