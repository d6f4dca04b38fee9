#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pgs/agents.hpp"
#include "pgs/osel.hpp"
#include "pgs/search.hpp"
#include "pgs/surrogate.hpp"
#include "pgs/tasks.hpp"

namespace pgs {

enum class Method { PgsCql, PgsSac, Grad };

std::string method_name(Method m);
Method parse_method(const std::string& name);

// Full specification of an experiment. Every list field is an ablation axis.
struct RunConfig {
  std::string task = "neg-ackley";
  int pool_size = 5000;
  double keep_percentile = 40.0;
  std::uint64_t dataset_seed = 0;
  std::string dataset_path;  // load instead of generating when set

  SurrogateConfig surrogate;

  std::vector<double> top_p{40.0};
  std::vector<int> traj_counts{2000};
  int traj_length = 50;
  bool monotonic = false;
  double a_max = 0.05;
  double grad_eps = kDefaultGradEps;

  std::vector<Method> methods{Method::PgsCql};
  CqlConfig agent;

  int num_starts = kDefaultNumStarts;
  std::vector<int> test_lengths{50};
  double grad_step = kDefaultGradStep;
  bool deterministic = true;
  bool record_wall_time = false;

  GridSpec grid;
  EncoderConfig encoder;

  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::string output_dir;
  std::string cache_dir;  // surrogate checkpoints keyed by content hash
  int jobs = 1;

  void validate() const;
  // Sorted key=value rendering of every result-affecting field.
  std::string canonical() const;
  std::string hash() const;
};

struct Report {
  std::string task;
  std::string method;
  double p = 0.0;  // NaN for the grad baseline
  int epochs = 0;
  int test_length = 0;
  int traj_count = 0;
  std::string seed;  // "agg" on aggregate rows
  double score100 = 0.0;
  double score50 = 0.0;
  double d_best = 0.0;
  double action_norm_first = 0.0;
  double action_norm_last = 0.0;
  double wall_seconds = 0.0;
  std::vector<double> action_norm_trace;  // mean ||alpha|| per search step
  double score100_std = 0.0;              // aggregate rows only
  double score50_std = 0.0;
  double clip_rate = 0.0;
  double mask_rate = 0.0;
};

struct ExperimentResult {
  std::vector<Report> reports;     // one per (seed, method, p, m, T_test)
  std::vector<Report> aggregates;  // mean and std over seeds per group
};

// Dataset -> surrogate -> top-p -> trajectories -> transitions -> agent ->
// N searches -> oracle evaluation, for every seed and ablation cell.
ExperimentResult run_experiment(const RunConfig& cfg);
ExperimentResult run_experiment(const RunConfig& cfg, const OfflineDataset& ds);

OfflineDataset dataset_for(const RunConfig& cfg);
std::vector<Report> aggregate_reports(const std::vector<Report>& reports);

// Trains (or loads from cfg.cache_dir) the surrogate for one seed.
Surrogate obtain_surrogate(const RunConfig& cfg, const OfflineDataset& ds, std::uint64_t seed);

}  // namespace pgs
