// Command-line front end for the hierax library: closed-loop simulation,
// training-data generation, surrogate training and the two benchmark
// studies, all driven by one JSON configuration document. Every command is
// deterministic under fixed seeds; wall-time columns can be excluded from
// result files so re-runs are byte-identical.

#include <CLI11.hpp>
#include <Eigen/Dense>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include "hierax/bench.hpp"
#include "hierax/config.hpp"
#include "hierax/csv.hpp"

namespace {

using namespace hierax;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open " + path);
  out << text;
}

RunConfig load_run_config(const std::string& path) {
  RunConfig rc = load_config_file(path);
  apply_seed_override(rc, std::getenv("HIERAX_SEED"));
  return rc;
}

std::string echo_text(const RunConfig& rc) { return config_to_json(rc).dump(2) + "\n"; }

int cmd_simulate(const std::string& config_path, const std::string& out_dir, bool walltimes) {
  RunConfig rc = load_run_config(config_path);
  load_surrogate_models(rc.base);

  std::filesystem::create_directories(out_dir);
  const ClosedLoopResult res = closed_loop_run(rc.base.scenario);

  const std::filesystem::path dir(out_dir);
  write_trajectory_csv(res, (dir / "trajectory.csv").string(), walltimes);
  write_run_summary_csv(res, (dir / "summary.csv").string(), walltimes);
  write_text((dir / "config_used.json").string(), echo_text(rc));

  std::printf("j_c_cl=%s steps=%ld updates=%d non_converged=%d\n",
              detail::g17(res.j_c_cl).c_str(), static_cast<long>(res.log.rows()), res.updates,
              res.non_converged_updates);
  return 0;
}

int cmd_gen_data(const std::string& config_path, int records, std::uint64_t seed,
                 const std::string& out_path, int subsystem, int spot_check) {
  const RunConfig rc = load_run_config(config_path);
  const ScenarioConfig& sc = rc.base.scenario;

  const std::vector<TrainingRecord> data = collect_dataset(sc, subsystem, records, seed);
  write_dataset_csv(data, out_path);
  std::printf("wrote %zu records to %s\n", data.size(), out_path.c_str());

  if (spot_check > 0) {
    const std::vector<TrainingRecord> back = read_dataset_csv(out_path);
    const BenchmarkSystem sys = build_benchmark(sc.horizon, sc.model_params);
    const ControlledSpec& cs = sys.controlled_spec(subsystem);
    SolverConfig label_cfg = sc.solver;
    label_cfg.warm_start = false;

    const int n_checks = std::min<int>(spot_check, static_cast<int>(back.size()));
    for (int i = 0; i < n_checks; ++i) {
      const std::size_t idx = static_cast<std::size_t>(i) * back.size() / n_checks;
      const TrainingRecord& rec = back[idx];
      LocalProblem prob;
      prob.model = sys.models[subsystem - 1].get();
      prob.x0 = rec.x_s;
      prob.r_s = rec.r_s;
      prob.v_in = rec.v_in_s;
      prob.w = rec.w_s;
      prob.u_lo = cs.u_lo;
      prob.u_hi = cs.u_hi;
      prob.cost = sys.costs[subsystem - 1];
      prob.horizon = sc.horizon;
      const SolveReport rep = solve(prob, label_cfg);
      if (rep.u_star != rec.u_s.data()) {
        throw std::runtime_error("spot-check failed: stored label differs from a fresh solve at record " +
                                 std::to_string(idx));
      }
    }
    std::printf("spot-check OK (%d records re-solved)\n", n_checks);
  }
  return 0;
}

struct SweepRow {
  std::string structure;
  std::vector<int> layers;
  double val_mse = 0.0;
  int best_epoch = -1;
  double seconds = 0.0;
};

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_path, bool sweep) {
  const RunConfig rc = load_run_config(config_path);

  const std::vector<TrainingRecord> records = read_dataset_csv(data_path);
  Eigen::MatrixXd z, u;
  records_to_matrices(records, z, u);
  const int z_dim = static_cast<int>(z.rows());
  const int u_dim = static_cast<int>(u.rows());

  const auto train_one = [&](const std::vector<int>& hidden) {
    std::vector<int> layers;
    layers.push_back(z_dim);
    layers.insert(layers.end(), hidden.begin(), hidden.end());
    layers.push_back(u_dim);
    const auto t0 = std::chrono::steady_clock::now();
    TrainResult tr = rprop_train(z, u, layers, rc.rprop);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return std::pair<TrainResult, double>(std::move(tr), secs);
  };

  const auto arch_string = [](const std::vector<int>& layers) {
    std::string s;
    for (std::size_t i = 0; i < layers.size(); ++i) {
      s += (i ? "x" : "") + std::to_string(layers[i]);
    }
    return s;
  };

  if (!sweep) {
    auto [tr, secs] = train_one(rc.hidden_layers);
    save_mlp(tr.params, out_path);
    std::vector<int> layers = {z_dim};
    layers.insert(layers.end(), rc.hidden_layers.begin(), rc.hidden_layers.end());
    layers.push_back(u_dim);
    std::printf("architecture %s: validation MSE %s at epoch %d (of %d), %.1fs\n",
                arch_string(layers).c_str(), detail::g17(tr.best_val).c_str(), tr.best_epoch,
                rc.rprop.epochs, secs);
    std::printf("saved model to %s\n", out_path.c_str());
    return 0;
  }

  // the three-configuration sweep: 1, 2 and 3 hidden layers of equal width
  const int width = rc.hidden_layers.front();
  std::vector<SweepRow> rows;
  TrainResult best;
  std::string best_structure;
  for (int depth = 1; depth <= 3; ++depth) {
    const std::vector<int> hidden(static_cast<std::size_t>(depth), width);
    auto [tr, secs] = train_one(hidden);
    SweepRow row;
    row.structure = "NN-" + std::to_string(depth) + "-" + std::to_string(width);
    row.layers = {z_dim};
    row.layers.insert(row.layers.end(), hidden.begin(), hidden.end());
    row.layers.push_back(u_dim);
    row.val_mse = tr.best_val;
    row.best_epoch = tr.best_epoch;
    row.seconds = secs;
    rows.push_back(row);
    if (best_structure.empty() || tr.best_val < best.best_val) {
      best = std::move(tr);
      best_structure = row.structure;
    }
  }

  std::printf("%-10s %-18s %14s %12s %10s\n", "structure", "architecture", "val MSE",
              "best epoch", "train s");
  for (const SweepRow& row : rows) {
    std::printf("%-10s %-18s %14.6g %12d %10.1f\n", row.structure.c_str(),
                arch_string(row.layers).c_str(), row.val_mse, row.best_epoch, row.seconds);
  }
  save_mlp(best.params, out_path);
  std::printf("saved best model (%s) to %s\n", best_structure.c_str(), out_path.c_str());
  return 0;
}

int cmd_bench(const std::string& mode, const std::string& config_path, const std::string& out_dir,
              bool walltimes) {
  RunConfig rc = load_run_config(config_path);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);

  if (mode == "solvers") {
    if (rc.base.scenario.controller != ControllerKind::exact) {
      throw ConfigError("bench solvers: scenario.controller must be \"exact\" (the dataset is "
                        "harvested from converged runs)");
    }
    const SolverDataset data = make_solver_dataset(rc.bench.n_instances, rc.bench.dataset_seed,
                                                   rc.base.scenario, rc.bench.min_activity);
    const SolverComparisonReport rep =
        compare_solvers(data, rc.base.scenario.solver, rc.base.scenario.oracle);
    write_solver_report_csv(rep, (dir / "solver_report.csv").string(), walltimes);
    write_text((dir / "config_used.json").string(), echo_text(rc));
    print_solver_report(std::cout, rep, rc.base.scenario.solver, rc.base.scenario.oracle);
    if (rc.bench.assert_j_bar_max > 0.0 && rep.j_bar > rc.bench.assert_j_bar_max) {
      std::fprintf(stderr, "assertion failed: J_bar %.4f%% above the configured bound %.4f%%\n",
                   rep.j_bar, rc.bench.assert_j_bar_max);
      return 1;
    }
    return 0;
  }

  if (mode == "closedloop") {
    if (rc.bench.scenarios.empty()) {
      throw ConfigError("bench closedloop: config.bench.scenarios must list at least one entry");
    }
    std::vector<ScenarioConfig> scenarios;
    for (ParsedScenario& ps : rc.bench.scenarios) {
      load_surrogate_models(ps);
      scenarios.push_back(ps.scenario);
    }
    const ClosedLoopComparisonReport rep = compare_closed_loop(scenarios);
    write_closed_loop_report_csv(rep, (dir / "closedloop_report.csv").string(), walltimes);
    write_text((dir / "config_used.json").string(), echo_text(rc));
    print_closed_loop_report(std::cout, rep);
    for (const ClosedLoopEntry& e : rep.entries) {
      if (e.failed) {
        std::fprintf(stderr, "scenario failed: %s\n", e.error.c_str());
        return 1;
      }
    }
    return 0;
  }

  throw ConfigError("bench: mode must be \"solvers\" or \"closedloop\"");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical NMPC testbed: simulation, surrogate training and benchmarks",
               "hierax"};
  app.set_help_all_flag("--help-all", "print help for every subcommand");
  app.require_subcommand(1);

  int threads = static_cast<int>(std::thread::hardware_concurrency());
  app.add_option("--threads", threads,
                 "linear-algebra thread budget; affects wall time only, never results "
                 "(default: all logical cores)");

  std::string config_path;
  std::string out_path;
  bool no_walltimes = false;

  CLI::App* simulate = app.add_subcommand("simulate", "run one closed-loop scenario");
  simulate->add_option("--config", config_path, "configuration document (JSON)")->required();
  simulate->add_option("--out", out_path, "output directory")->required();
  simulate->add_flag("--no-walltimes", no_walltimes,
                     "exclude machine-dependent wall-time columns from result files");

  int records = 1000;
  std::uint64_t seed = 1;
  int subsystem = 1;
  int spot_check = 0;
  CLI::App* gen = app.add_subcommand("gen-data", "collect a labelled training dataset");
  gen->add_option("--config", config_path, "configuration document (JSON)")->required();
  gen->add_option("--records", records, "number of records to collect")->required();
  gen->add_option("--seed", seed, "dataset seed")->capture_default_str();
  gen->add_option("--subsystem", subsystem, "controlled subsystem to harvest")
      ->capture_default_str();
  gen->add_option("--spot-check", spot_check,
                  "re-solve this many stored records and verify the labels match")
      ->capture_default_str();
  gen->add_option("--out", out_path, "output CSV file")->required();

  std::string data_path;
  bool sweep = false;
  CLI::App* train = app.add_subcommand("train", "train the surrogate on a dataset");
  train->add_option("--config", config_path, "configuration document (JSON)")->required();
  train->add_option("--data", data_path, "training dataset CSV")->required();
  train->add_option("--out", out_path, "output model file (JSON)")->required();
  train->add_flag("--sweep", sweep,
                  "train the 1/2/3-hidden-layer variants and print the comparison table");

  std::string mode;
  CLI::App* bench = app.add_subcommand("bench", "run a comparison study");
  bench->add_option("--mode", mode, "study: \"solvers\" or \"closedloop\"")->required();
  bench->add_option("--config", config_path, "configuration document (JSON)")->required();
  bench->add_option("--out", out_path, "output directory")->required();
  bench->add_flag("--no-walltimes", no_walltimes,
                  "exclude machine-dependent wall-time columns from result files");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  Eigen::setNbThreads(std::max(1, threads));

  try {
    if (simulate->parsed()) return cmd_simulate(config_path, out_path, !no_walltimes);
    if (gen->parsed()) return cmd_gen_data(config_path, records, seed, out_path, subsystem,
                                           spot_check);
    if (train->parsed()) return cmd_train(config_path, data_path, out_path, sweep);
    if (bench->parsed()) return cmd_bench(mode, config_path, out_path, !no_walltimes);
  } catch (const hierax::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
