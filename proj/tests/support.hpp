#pragma once

#include <Eigen/Dense>

#include <filesystem>
#include <random>
#include <string>

namespace testsup {

// Scratch-file location for round-trip tests: keeps artifacts out of the
// working directory even when an assertion fires before the cleanup line.
inline std::string tmp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

// Portable uniform draws on top of mt19937_64 (std distributions are
// implementation-defined).
inline double urand(std::mt19937_64& rng, double lo, double hi) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return lo + u * (hi - lo);
}

inline Eigen::VectorXd uvec(std::mt19937_64& rng, Eigen::Index n, double lo, double hi) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = urand(rng, lo, hi);
  return v;
}

// Central finite differences, the independent oracle for adjoint/backprop
// gradients.
template <class F>
Eigen::VectorXd fd_gradient(const F& f, const Eigen::VectorXd& u, double h) {
  Eigen::VectorXd g(u.size());
  Eigen::VectorXd p = u;
  for (Eigen::Index i = 0; i < u.size(); ++i) {
    const double saved = p[i];
    p[i] = saved + h;
    const double fp = f(p);
    p[i] = saved - h;
    const double fm = f(p);
    p[i] = saved;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

inline double rel_err_inf(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  const double scale = std::max(1e-8, b.lpNorm<Eigen::Infinity>());
  return (a - b).lpNorm<Eigen::Infinity>() / scale;
}

}  // namespace testsup
