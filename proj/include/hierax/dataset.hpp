#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hierax/closed_loop.hpp"
#include "hierax/surrogate.hpp"

namespace hierax {

/// One (problem, solution) pair harvested from a coordination sweep: the
/// frozen local instance the target subsystem saw, labelled with the
/// truncated solver's answer on that instance.
struct TrainingRecord {
  Eigen::VectorXd x_s;
  Profile v_in_s;
  Eigen::VectorXd r_s;
  Profile w_s;
  Profile u_s;  // label
};

/// Stacks records into feature/label matrices (one column per record) in the
/// same component order the surrogate is queried with.
inline void records_to_matrices(const std::vector<TrainingRecord>& records, Eigen::MatrixXd& z,
                                Eigen::MatrixXd& u) {
  if (records.empty()) throw std::invalid_argument("records_to_matrices: empty dataset");
  const Eigen::Index n = static_cast<Eigen::Index>(records.size());
  const Eigen::VectorXd z0 = surrogate_input(records[0].x_s, records[0].r_s, records[0].v_in_s,
                                             records[0].w_s);
  z.resize(z0.size(), n);
  u.resize(records[0].u_s.size(), n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const TrainingRecord& rec = records[i];
    z.col(i) = surrogate_input(rec.x_s, rec.r_s, rec.v_in_s, rec.w_s);
    u.col(i) = rec.u_s.data();
  }
}

namespace detail {

inline std::string g17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  double m = v[mid];
  if (v.size() % 2 == 0) {
    m = 0.5 * (m + *std::max_element(v.begin(), v.begin() + mid));
  }
  return m;
}

}  // namespace detail

/// Columnar CSV, one record per row; the header names every component so the
/// layout is self-describing (v/w/u columns carry step and component
/// indices). Values are printed with 17 significant digits and survive a
/// write/read round trip bit-exactly.
inline void write_dataset_csv(const std::vector<TrainingRecord>& records, const std::string& path) {
  if (records.empty()) throw std::invalid_argument("write_dataset_csv: empty dataset");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_dataset_csv: cannot open " + path);

  const TrainingRecord& r0 = records.front();
  std::vector<std::string> cols;
  for (Eigen::Index i = 0; i < r0.x_s.size(); ++i) cols.push_back("x" + std::to_string(i + 1));
  for (int k = 0; k < r0.v_in_s.horizon(); ++k) {
    for (int c = 0; c < r0.v_in_s.step_dim(); ++c) {
      cols.push_back("v" + std::to_string(k + 1) + "_" + std::to_string(c + 1));
    }
  }
  for (Eigen::Index i = 0; i < r0.r_s.size(); ++i) cols.push_back("r" + std::to_string(i + 1));
  for (int k = 0; k < r0.w_s.horizon(); ++k) {
    for (int c = 0; c < r0.w_s.step_dim(); ++c) {
      cols.push_back("w" + std::to_string(k + 1) + "_" + std::to_string(c + 1));
    }
  }
  for (int k = 0; k < r0.u_s.horizon(); ++k) {
    for (int c = 0; c < r0.u_s.step_dim(); ++c) {
      cols.push_back("u" + std::to_string(k + 1) + "_" + std::to_string(c + 1));
    }
  }
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';

  for (const TrainingRecord& rec : records) {
    bool first = true;
    auto emit = [&](double v) {
      out << (first ? "" : ",") << detail::g17(v);
      first = false;
    };
    for (Eigen::Index i = 0; i < rec.x_s.size(); ++i) emit(rec.x_s[i]);
    for (Eigen::Index i = 0; i < rec.v_in_s.size(); ++i) emit(rec.v_in_s.data()[i]);
    for (Eigen::Index i = 0; i < rec.r_s.size(); ++i) emit(rec.r_s[i]);
    for (Eigen::Index i = 0; i < rec.w_s.size(); ++i) emit(rec.w_s.data()[i]);
    for (Eigen::Index i = 0; i < rec.u_s.size(); ++i) emit(rec.u_s.data()[i]);
    out << '\n';
  }
}

inline std::vector<TrainingRecord> read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("read_dataset_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("read_dataset_csv: empty file");

  // reconstruct the block shapes from the header names
  int n_x = 0, n_r = 0;
  int v_h = 0, v_d = 0, w_h = 0, w_d = 0, u_h = 0, u_d = 0;
  std::size_t n_cols = 0;
  {
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
      ++n_cols;
      if (tok.empty()) throw std::runtime_error("read_dataset_csv: empty header column");
      const char kind = tok[0];
      const std::string rest = tok.substr(1);
      const std::size_t us = rest.find('_');
      if (kind == 'x') {
        n_x = std::max(n_x, std::stoi(rest));
      } else if (kind == 'r') {
        n_r = std::max(n_r, std::stoi(rest));
      } else if (kind == 'v' || kind == 'w' || kind == 'u') {
        if (us == std::string::npos) throw std::runtime_error("read_dataset_csv: bad column " + tok);
        const int k = std::stoi(rest.substr(0, us));
        const int c = std::stoi(rest.substr(us + 1));
        if (kind == 'v') {
          v_h = std::max(v_h, k);
          v_d = std::max(v_d, c);
        } else if (kind == 'w') {
          w_h = std::max(w_h, k);
          w_d = std::max(w_d, c);
        } else {
          u_h = std::max(u_h, k);
          u_d = std::max(u_d, c);
        }
      } else {
        throw std::runtime_error("read_dataset_csv: unknown column " + tok);
      }
    }
  }
  const std::size_t expect = static_cast<std::size_t>(n_x + n_r + v_h * v_d + w_h * w_d + u_h * u_d);
  if (n_cols != expect) throw std::runtime_error("read_dataset_csv: header shape inconsistent");

  std::vector<TrainingRecord> records;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string tok;
    std::vector<double> vals;
    vals.reserve(n_cols);
    while (std::getline(ss, tok, ',')) vals.push_back(std::stod(tok));
    if (vals.size() != n_cols) throw std::runtime_error("read_dataset_csv: row width mismatch");

    TrainingRecord rec;
    std::size_t p = 0;
    rec.x_s.resize(n_x);
    for (int i = 0; i < n_x; ++i) rec.x_s[i] = vals[p++];
    Eigen::VectorXd vv(v_h * v_d);
    for (Eigen::Index i = 0; i < vv.size(); ++i) vv[i] = vals[p++];
    rec.v_in_s = Profile(v_h, v_d, vv);
    rec.r_s.resize(n_r);
    for (int i = 0; i < n_r; ++i) rec.r_s[i] = vals[p++];
    Eigen::VectorXd ww(w_h * w_d);
    for (Eigen::Index i = 0; i < ww.size(); ++i) ww[i] = vals[p++];
    rec.w_s = Profile(w_h, w_d, ww);
    Eigen::VectorXd uu(u_h * u_d);
    for (Eigen::Index i = 0; i < uu.size(); ++i) uu[i] = vals[p++];
    rec.u_s = Profile(u_h, u_d, uu);
    records.push_back(std::move(rec));
  }
  return records;
}

/// Harvests training data for one subsystem's controller by running
/// closed-loop simulations (PRBS set-points and disturbances across the
/// operational ranges unless the scenario specifies otherwise) driven by the
/// exact controllers, recording every local instance the target subsystem is
/// asked to solve — one record per fixed-point sweep — and labelling each
/// instance with a fresh cold-start truncated solve. Simulations are
/// repeated with derived seeds until `target` records exist.
inline std::vector<TrainingRecord> collect_dataset(const ScenarioConfig& scenario,
                                                   int target_subsystem, int target,
                                                   std::uint64_t seed) {
  if (target < 0) throw std::invalid_argument("collect_dataset: negative target");
  std::vector<TrainingRecord> records;
  if (target == 0) return records;
  if (scenario.controller != ControllerKind::exact) {
    throw std::invalid_argument("collect_dataset: scenario must use the exact controller");
  }

  ScenarioConfig sc = scenario;
  const BenchmarkSystem sys = build_benchmark(sc.horizon, sc.model_params);
  if (sc.setpoints.empty()) sc.setpoints = prbs_setpoint_signals(sys, 5, 15);
  if (sc.disturbances.empty()) sc.disturbances = prbs_disturbance_signals(sys, 5, 15);

  SolverConfig label_cfg = sc.solver;
  label_cfg.warm_start = false;  // labels are canonical cold-start solves

  const auto& model = sys.models[target_subsystem - 1];
  const ControlledSpec& cs = sys.controlled_spec(target_subsystem);

  for (int run = 0; records.size() < static_cast<std::size_t>(target); ++run) {
    ScenarioConfig sc_run = sc;
    sc_run.seed = derive_seed(seed, run);

    const BenchmarkSystem model_sys = build_benchmark(sc_run.horizon, sc_run.model_params);
    const BenchmarkSystem plant_sys = build_benchmark(sc_run.horizon, sc_run.plant_params);
    auto agents = make_benchmark_agents(model_sys, sc_run);
    auto* target_agent = dynamic_cast<NmpcAgent*>(agents[target_subsystem - 1].get());
    if (target_agent == nullptr) {
      throw std::invalid_argument("collect_dataset: target subsystem has no NMPC controller");
    }

    const std::size_t before = records.size();
    target_agent->set_observer([&](const Eigen::VectorXd& r_s, const Eigen::VectorXd& x_s,
                                   const Profile& v_in, const Profile& w, const AgentResult&) {
      LocalProblem prob;
      prob.model = model.get();
      prob.x0 = x_s;
      prob.r_s = r_s;
      prob.v_in = v_in;
      prob.w = w;
      prob.u_lo = cs.u_lo;
      prob.u_hi = cs.u_hi;
      prob.cost = sys.costs[target_subsystem - 1];
      prob.horizon = sc_run.horizon;
      const SolveReport rep = solve(prob, label_cfg);
      records.push_back({x_s, v_in, r_s, w, prob.as_profile(rep.u_star)});
    });

    AgentNetwork net(model_sys.topology, agents);
    PlantSimulator plant(plant_sys);
    closed_loop_run(sc_run, net, plant, model_sys);
    if (records.size() == before) {
      throw std::runtime_error("collect_dataset: simulation produced no records");
    }
  }
  records.resize(target);
  return records;
}

}  // namespace hierax
