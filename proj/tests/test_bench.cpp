#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cstdio>
#include <limits>
#include <fstream>
#include <sstream>
#include <string>

#include "hierax/bench.hpp"
#include "support.hpp"

using namespace hierax;

namespace {

ScenarioConfig small_base() {
  ScenarioConfig sc;
  sc.horizon = 6;
  sc.n_sim = 6;
  return sc;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("instance sampling is deterministic and respects its envelope") {
  const SolverDataset a = make_solver_dataset(25, 3, small_base());
  REQUIRE(a.instances.size() == 25);
  REQUIRE(a.horizon == 6);

  bool saw_1 = false, saw_4 = false;
  for (const SolverInstance& inst : a.instances) {
    REQUIRE((inst.subsystem == 1 || inst.subsystem == 4));
    saw_1 = saw_1 || inst.subsystem == 1;
    saw_4 = saw_4 || inst.subsystem == 4;
    const int s = inst.subsystem;
    REQUIRE((inst.x_s.array() >= a.x_lo[s - 1].array()).all());
    REQUIRE((inst.x_s.array() <= a.x_hi[s - 1].array()).all());
    REQUIRE(inst.v_in.horizon() == 6);
    REQUIRE(inst.w.horizon() == 6);
  }
  REQUIRE(saw_1);
  REQUIRE(saw_4);
  REQUIRE(a.x_lo[0].allFinite());
  REQUIRE(a.x_hi[0].allFinite());
  REQUIRE((a.x_hi[0] - a.x_lo[0]).maxCoeff() > 0.0);  // the runs actually moved

  const SolverDataset b = make_solver_dataset(25, 3, small_base());
  for (std::size_t i = 0; i < 25; ++i) {
    REQUIRE(b.instances[i].subsystem == a.instances[i].subsystem);
    REQUIRE(b.instances[i].x_s == a.instances[i].x_s);
    REQUIRE(b.instances[i].r_s == a.instances[i].r_s);
    REQUIRE(b.instances[i].v_in.data() == a.instances[i].v_in.data());
    REQUIRE(b.instances[i].w.data() == a.instances[i].w.data());
  }

  const SolverDataset c = make_solver_dataset(25, 4, small_base());
  bool any_diff = false;
  for (std::size_t i = 0; i < 25 && !any_diff; ++i) {
    any_diff = c.instances[i].x_s != a.instances[i].x_s ||
               c.instances[i].r_s != a.instances[i].r_s;
  }
  REQUIRE(any_diff);

  REQUIRE(make_solver_dataset(1, 0, small_base()).instances.size() == 1);
  REQUIRE_THROWS_AS(make_solver_dataset(0, 0, small_base()), std::invalid_argument);
  ScenarioConfig bad = small_base();
  bad.controller = ControllerKind::truncated;
  REQUIRE_THROWS_AS(make_solver_dataset(5, 0, bad), std::invalid_argument);
}

TEST_CASE("truncated solves stay within a few percent of the converged reference") {
  const SolverDataset data = make_solver_dataset(30, 1, small_base());
  const SolverComparisonReport rep = compare_solvers(data, SolverConfig{});

  REQUIRE(rep.excluded == 0);
  REQUIRE(rep.n_dta == 30);
  REQUIRE(rep.ratios.size() == 30);
  REQUIRE(rep.t_truncated.size() == 30);
  for (double r : rep.ratios) REQUIRE(r >= 1.0 - 1e-9);  // the reference is converged
  REQUIRE(rep.j_bar >= 100.0 - 1e-6);
  REQUIRE(rep.j_bar <= 105.0);

  double sum = 0.0;
  for (double r : rep.ratios) sum += r;
  REQUIRE(std::abs(rep.j_bar - 100.0 * sum / 30.0) < 1e-12);
  REQUIRE(rep.t_max_truncated == *std::max_element(rep.t_truncated.begin(), rep.t_truncated.end()));

  REQUIRE_THROWS_AS(compare_solvers(SolverDataset{}, SolverConfig{}), std::invalid_argument);
}

TEST_CASE("a generous truncation budget closes the gap to the reference") {
  // the early-exit norm is scaled by the (clamped) BB step, so switching the
  // exit off and spending pure iterations is what actually closes the gap
  const SolverDataset data = make_solver_dataset(10, 2, small_base());
  SolverConfig generous;
  generous.n_max = 20000;
  generous.pg_tol = 0.0;
  const SolverComparisonReport rep = compare_solvers(data, generous);

  REQUIRE(rep.n_dta == 10);
  for (double r : rep.ratios) {
    REQUIRE(r >= 1.0 - 1e-9);
    REQUIRE(r <= 1.01);
  }
  REQUIRE(std::abs(rep.j_bar - 100.0) < 0.5);

  // and the gap shrinks monotonically as the budget grows
  double prev = std::numeric_limits<double>::infinity();
  for (int budget : {50, 500, 5000}) {
    SolverConfig cfg;
    cfg.n_max = budget;
    cfg.pg_tol = 0.0;
    const double jb = compare_solvers(data, cfg).j_bar;
    REQUIRE(jb <= prev + 1e-9);
    prev = jb;
  }
  REQUIRE(prev >= rep.j_bar - 1e-9);
}

TEST_CASE("the comparison is order invariant over the dataset") {
  SolverDataset data = make_solver_dataset(12, 7, small_base());
  const SolverComparisonReport fwd = compare_solvers(data, SolverConfig{});
  std::reverse(data.instances.begin(), data.instances.end());
  const SolverComparisonReport rev = compare_solvers(data, SolverConfig{});

  std::vector<double> a = fwd.ratios, b = rev.ratios;
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  REQUIRE(a == b);  // identical instances produce bitwise identical ratios
  REQUIRE(std::abs(fwd.j_bar - rev.j_bar) < 1e-12);
}

TEST_CASE("closed-loop comparison runs every configuration on the same weather") {
  const BenchmarkSystem sys = build_benchmark(6);
  ScenarioConfig base = small_base();
  base.n_sim = 4;
  base.disturbances = prbs_disturbance_signals(sys, 2, 4);
  base.seed = 5;

  ScenarioConfig twin = base;
  const ClosedLoopComparisonReport rep = compare_closed_loop({base, twin});
  REQUIRE(rep.entries.size() == 2);
  REQUIRE_FALSE(rep.entries[0].failed);
  REQUIRE(rep.entries[0].j_c_cl == rep.entries[1].j_c_cl);
  REQUIRE(rep.entries[0].controller == ControllerKind::exact);
  REQUIRE(rep.entries[0].tau_u == 1.0);
  REQUIRE(rep.entries[0].j_c_cl >= 0.0);
  REQUIRE(rep.entries[0].solve_seconds.size() == 2 * 4);  // two controlled locals per update

  ScenarioConfig other = base;
  other.n_sim = 5;
  REQUIRE_THROWS_AS(compare_closed_loop({base, other}), std::invalid_argument);
  other = base;
  other.seed = 6;
  REQUIRE_THROWS_AS(compare_closed_loop({base, other}), std::invalid_argument);
  other = base;
  other.disturbances = prbs_disturbance_signals(sys, 2, 5);
  REQUIRE_THROWS_AS(compare_closed_loop({base, other}), std::invalid_argument);
  other = base;
  other.plant_params.mismatch = 0.1;
  REQUIRE_THROWS_AS(compare_closed_loop({base, other}), std::invalid_argument);
  REQUIRE_THROWS_AS(compare_closed_loop({}), std::invalid_argument);

  // a diverging configuration is reported, not fatal
  ScenarioConfig doomed = base;
  doomed.divergence_bound = 1e-6;
  const ClosedLoopComparisonReport part = compare_closed_loop({base, doomed});
  REQUIRE_FALSE(part.entries[0].failed);
  REQUIRE(part.entries[1].failed);
  REQUIRE(part.entries[1].error.find("diverged") != std::string::npos);
}

TEST_CASE("report files and tables are reproducible without wall times") {
  const SolverDataset data = make_solver_dataset(6, 11, small_base());
  const SolverComparisonReport rep = compare_solvers(data, SolverConfig{});

  const std::string pa = testsup::tmp_path("solver_rep_a.csv");
  const std::string pb = testsup::tmp_path("solver_rep_b.csv");
  write_solver_report_csv(rep, pa, false);
  write_solver_report_csv(rep, pb, false);
  const std::string a = slurp(pa);
  REQUIRE(a == slurp(pb));
  std::remove(pa.c_str());
  std::remove(pb.c_str());
  REQUIRE(a.rfind("instance,ratio,j_truncated,j_reference\n", 0) == 0);
  REQUIRE(std::count(a.begin(), a.end(), '\n') == rep.n_dta + 1);

  std::stringstream table;
  print_solver_report(table, rep, SolverConfig{});
  REQUIRE(table.str().find("J_bar") != std::string::npos);
  REQUIRE(table.str().find("truncated gradient") != std::string::npos);
  REQUIRE(table.str().find("converged reference") != std::string::npos);

  const BenchmarkSystem sys = build_benchmark(6);
  ScenarioConfig base = small_base();
  base.n_sim = 3;
  ScenarioConfig doomed = base;
  doomed.divergence_bound = 1e-6;
  const ClosedLoopComparisonReport cl = compare_closed_loop({base, doomed});
  const std::string pc = testsup::tmp_path("cl_rep_a.csv");
  write_closed_loop_report_csv(cl, pc, false);
  const std::string c = slurp(pc);
  std::remove(pc.c_str());
  REQUIRE(c.rfind("entry,controller,tau_u,j_c_cl,non_converged_updates,failed\n", 0) == 0);
  REQUIRE(c.find("exact") != std::string::npos);

  std::stringstream cltab;
  print_closed_loop_report(cltab, cl);
  REQUIRE(cltab.str().find("FAILED") != std::string::npos);
  REQUIRE(cltab.str().find("J_c_cl") != std::string::npos);
}

TEST_CASE("the median helper splits even and odd samples") {
  REQUIRE(hierax::detail::median({3.0, 1.0, 2.0}) == 2.0);
  REQUIRE(hierax::detail::median({4.0, 1.0, 3.0, 2.0}) == 2.5);
  REQUIRE(hierax::detail::median({}) == 0.0);
  REQUIRE(hierax::detail::median({7.0}) == 7.0);
}
