#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pgs/numerics.hpp"

namespace pgs {

// A deterministic black-box objective to be maximised over a box.
struct Task {
  std::string name;
  int dim = 0;
  Vector lo;
  Vector hi;
  std::function<double(const Vector&)> objective;
  // Documentation only; never handed to a learner.
  double known_max = 0.0;
};

// neg-ackley (d=10, [-5,5]), neg-rastrigin (d=10, [-5.12,5.12]),
// neg-rosenbrock (d=8, [-2.048,2.048]), quadratic-bowl (d=5, [-1,1]).
Task make_task(const std::string& name);
std::vector<std::string> builtin_task_names();

Vector clamp_to_box(const Vector& x, const Vector& lo, const Vector& hi, bool* clamped = nullptr);

// Evaluates the oracle after projecting x onto the task box. `clamped` reports
// whether the projection moved x.
double oracle_eval(const Task& task, const Vector& x, bool* clamped = nullptr);

struct OfflineDataset {
  std::string task_name;
  Matrix inputs;    // n x d
  Vector outputs;   // raw y_i = f(x_i)
  Vector lo, hi;    // search box
  double pool_min = 0.0;
  double pool_max = 0.0;
  Vector input_mean, input_std;
  double output_mean = 0.0;
  double output_std = 1.0;
  std::uint64_t seed = 0;
  double keep_percentile = 100.0;
  int pool_size = 0;

  int size() const { return static_cast<int>(outputs.size()); }
  int dim() const { return static_cast<int>(inputs.cols()); }
  Vector input(int i) const { return inputs.row(i).transpose(); }
  double z_output(double y) const { return (y - output_mean) / output_std; }
};

// Standard deviations below this are replaced by 1 so z-scoring stays finite.
inline constexpr double kMinStd = 1e-8;

// Builds a dataset from raw arrays and computes the z-score statistics.
OfflineDataset make_dataset(std::string task_name, Matrix inputs, Vector outputs, Vector lo, Vector hi,
                            double pool_min, double pool_max);

struct Pool {
  Matrix inputs;
  Vector outputs;
};

// Uniform sample of the task box with oracle values; what the learner never sees.
Pool sample_pool(const Task& task, int pool_size, std::uint64_t seed);

// Keeps the ceil(pool_size * keep_percentile / 100) lowest-scoring pool points
// (stable order on ties), preserving sample order in the result.
OfflineDataset generate_offline_dataset(const Task& task, int pool_size, double keep_percentile,
                                        std::uint64_t seed);
std::vector<int> kept_pool_indices(const Pool& pool, double keep_percentile);

// (y - pool_min) / (pool_max - pool_min); not clipped.
double normalize_score(double y, const OfflineDataset& ds);

struct BestValue {
  double raw;
  double normalized;
};
BestValue d_best(const OfflineDataset& ds);

// CSV with header x0..x{d-1},y plus a key=value sidecar at <csv>.meta.
void save_dataset(const OfflineDataset& ds, const std::filesystem::path& csv_path,
                  const std::string& config_hash = "");
OfflineDataset load_dataset(const std::filesystem::path& csv_path);
std::string dataset_csv(const OfflineDataset& ds);
std::string dataset_fingerprint(const OfflineDataset& ds);

}  // namespace pgs
