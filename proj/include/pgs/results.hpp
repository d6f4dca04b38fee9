#pragma once

#include <string>
#include <vector>

#include "pgs/experiment.hpp"

namespace pgs {

// Results CSV: a "# config_hash=" line, a header, per-seed rows, then one
// seed=agg row per group. wall_seconds is NA unless wall time is recorded.
std::string results_csv(const ExperimentResult& result, const std::string& config_hash, bool record_wall_time);
std::vector<Report> parse_results_csv(const std::string& text);

// Per-step mean action norms, one row per (report, step).
std::string action_norm_csv(const ExperimentResult& result, const std::string& config_hash);

// Per-task table of mean +- std over seeds with a d_best row; the best
// score100 in each task is marked with '*'. Empty input gives "no results".
std::string report_table(const std::vector<Report>& rows);

}  // namespace pgs
