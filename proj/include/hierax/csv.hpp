#pragma once

#include <fstream>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include "hierax/dataset.hpp"

namespace hierax {

/// Columns that depend on the machine rather than the experiment. Excluding
/// them (include_walltimes = false) makes result files byte-reproducible
/// under identical seeds.
inline bool is_walltime_column(const std::string& name) { return name == "solver_seconds"; }

inline void write_trajectory_csv(const ClosedLoopResult& res, std::ostream& out,
                                 bool include_walltimes) {
  std::vector<int> keep;
  for (std::size_t c = 0; c < res.columns.size(); ++c) {
    if (include_walltimes || !is_walltime_column(res.columns[c])) {
      keep.push_back(static_cast<int>(c));
    }
  }
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out << (i ? "," : "") << res.columns[keep[i]];
  }
  out << '\n';
  for (Eigen::Index row = 0; row < res.log.rows(); ++row) {
    for (std::size_t i = 0; i < keep.size(); ++i) {
      out << (i ? "," : "") << detail::g17(res.log(row, keep[i]));
    }
    out << '\n';
  }
}

inline void write_trajectory_csv(const ClosedLoopResult& res, const std::string& path,
                                 bool include_walltimes) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_trajectory_csv: cannot open " + path);
  write_trajectory_csv(res, out, include_walltimes);
}

/// One-row summary of a closed-loop run: the headline performance index and
/// the update bookkeeping, with the wall-time aggregates behind the same
/// exclusion flag as the trajectory columns.
inline void write_run_summary_csv(const ClosedLoopResult& res, std::ostream& out,
                                  bool include_walltimes) {
  out << "j_c_cl,steps,updates,non_converged_updates,total_sweeps";
  if (include_walltimes) out << ",total_solve_seconds,median_solve_seconds";
  out << '\n';
  const long total_sweeps =
      std::accumulate(res.sweeps_per_update.begin(), res.sweeps_per_update.end(), 0L);
  out << detail::g17(res.j_c_cl) << ',' << res.log.rows() << ',' << res.updates << ','
      << res.non_converged_updates << ',' << total_sweeps;
  if (include_walltimes) {
    const double total =
        std::accumulate(res.solve_seconds.begin(), res.solve_seconds.end(), 0.0);
    out << ',' << detail::g17(total) << ',' << detail::g17(detail::median(res.solve_seconds));
  }
  out << '\n';
}

inline void write_run_summary_csv(const ClosedLoopResult& res, const std::string& path,
                                  bool include_walltimes) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_run_summary_csv: cannot open " + path);
  write_run_summary_csv(res, out, include_walltimes);
}

}  // namespace hierax
