#include "pgs/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <random>
#include <sstream>

#include "pgs/checkpoint.hpp"
#include "pgs/error.hpp"

namespace pgs {

namespace {

Task box_task(std::string name, int d, double lo, double hi, std::function<double(const Vector&)> f,
              double known_max) {
  Task t;
  t.name = std::move(name);
  t.dim = d;
  t.lo = Vector::Constant(d, lo);
  t.hi = Vector::Constant(d, hi);
  t.objective = std::move(f);
  t.known_max = known_max;
  return t;
}

double ackley(const Vector& x) {
  constexpr double a = 20.0, b = 0.2, c = 2.0 * std::numbers::pi;
  const double d = static_cast<double>(x.size());
  const double sq = x.squaredNorm() / d;
  const double cs = (c * x.array()).cos().sum() / d;
  return -a * std::exp(-b * std::sqrt(sq)) - std::exp(cs) + a + std::numbers::e;
}

double rastrigin(const Vector& x) {
  constexpr double A = 10.0;
  double s = A * static_cast<double>(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) s += x(i) * x(i) - A * std::cos(2.0 * std::numbers::pi * x(i));
  return s;
}

double rosenbrock(const Vector& x) {
  double s = 0.0;
  for (Eigen::Index i = 0; i + 1 < x.size(); ++i) {
    const double t = x(i + 1) - x(i) * x(i);
    s += 100.0 * t * t + (1.0 - x(i)) * (1.0 - x(i));
  }
  return s;
}

}  // namespace

std::vector<std::string> builtin_task_names() {
  return {"neg-ackley", "neg-rastrigin", "neg-rosenbrock", "quadratic-bowl"};
}

Task make_task(const std::string& name) {
  if (name == "neg-ackley") return box_task(name, 10, -5.0, 5.0, [](const Vector& x) { return -ackley(x); }, 0.0);
  if (name == "neg-rastrigin") {
    return box_task(name, 10, -5.12, 5.12, [](const Vector& x) { return -rastrigin(x); }, 0.0);
  }
  if (name == "neg-rosenbrock") {
    return box_task(name, 8, -2.048, 2.048, [](const Vector& x) { return -rosenbrock(x); }, 0.0);
  }
  if (name == "quadratic-bowl") {
    return box_task(name, 5, -1.0, 1.0, [](const Vector& x) { return -x.squaredNorm(); }, 0.0);
  }
  throw InvalidArgument("unknown task '" + name + "'");
}

Vector clamp_to_box(const Vector& x, const Vector& lo, const Vector& hi, bool* clamped) {
  Vector out = x.cwiseMax(lo).cwiseMin(hi);
  if (clamped) *clamped = (out.array() != x.array()).any();
  return out;
}

double oracle_eval(const Task& task, const Vector& x, bool* clamped) {
  if (x.size() != task.dim) {
    throw DimensionMismatch("task " + task.name + " expects dimension " + std::to_string(task.dim));
  }
  if (x.hasNaN()) throw InvalidArgument("oracle_eval: NaN input");
  return task.objective(clamp_to_box(x, task.lo, task.hi, clamped));
}

OfflineDataset make_dataset(std::string task_name, Matrix inputs, Vector outputs, Vector lo, Vector hi,
                            double pool_min, double pool_max) {
  const Eigen::Index n = inputs.rows();
  if (n < 2) throw TooSmallDataset("an offline dataset needs at least 2 points");
  if (outputs.size() != n) throw DimensionMismatch("inputs and outputs disagree on n");
  if (lo.size() != inputs.cols() || hi.size() != inputs.cols()) {
    throw DimensionMismatch("box dimension does not match inputs");
  }
  OfflineDataset ds;
  ds.task_name = std::move(task_name);
  ds.lo = std::move(lo);
  ds.hi = std::move(hi);
  ds.pool_min = pool_min;
  ds.pool_max = pool_max;
  ds.input_mean = inputs.colwise().mean().transpose();
  ds.input_std = ((inputs.rowwise() - ds.input_mean.transpose()).array().square().colwise().sum() /
                  static_cast<double>(n))
                     .sqrt()
                     .transpose();
  for (Eigen::Index j = 0; j < ds.input_std.size(); ++j) {
    if (!(ds.input_std(j) > kMinStd)) ds.input_std(j) = 1.0;
  }
  ds.output_mean = outputs.mean();
  ds.output_std = std::sqrt((outputs.array() - ds.output_mean).square().sum() / static_cast<double>(n));
  if (!(ds.output_std > kMinStd)) ds.output_std = 1.0;
  ds.inputs = std::move(inputs);
  ds.outputs = std::move(outputs);
  return ds;
}

Pool sample_pool(const Task& task, int pool_size, std::uint64_t seed) {
  if (pool_size < 1) throw InvalidArgument("pool size must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  Pool pool;
  pool.inputs.resize(pool_size, task.dim);
  pool.outputs.resize(pool_size);
  for (int i = 0; i < pool_size; ++i) {
    for (int j = 0; j < task.dim; ++j) {
      pool.inputs(i, j) = task.lo(j) + (task.hi(j) - task.lo(j)) * unit(rng);
    }
    pool.outputs(i) = oracle_eval(task, pool.inputs.row(i).transpose());
  }
  return pool;
}

std::vector<int> kept_pool_indices(const Pool& pool, double keep_percentile) {
  const int n = static_cast<int>(pool.outputs.size());
  const int keep = static_cast<int>(std::ceil(n * keep_percentile / 100.0 - 1e-9));
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return pool.outputs(a) < pool.outputs(b); });
  order.resize(std::clamp(keep, 0, n));
  std::sort(order.begin(), order.end());
  return order;
}

OfflineDataset generate_offline_dataset(const Task& task, int pool_size, double keep_percentile,
                                        std::uint64_t seed) {
  if (pool_size < 100) throw InvalidArgument("pool_size must be at least 100");
  if (!(keep_percentile > 0.0 && keep_percentile <= 100.0)) {
    throw InvalidArgument("keep_percentile must lie in (0, 100]");
  }
  Pool pool = sample_pool(task, pool_size, seed);
  std::vector<int> kept = kept_pool_indices(pool, keep_percentile);
  if (kept.size() < 50) {
    throw TooSmallDataset("keep_percentile " + std::to_string(keep_percentile) + " leaves only " +
                          std::to_string(kept.size()) + " points (need 50)");
  }
  Matrix x(static_cast<Eigen::Index>(kept.size()), task.dim);
  Vector y(static_cast<Eigen::Index>(kept.size()));
  for (std::size_t r = 0; r < kept.size(); ++r) {
    x.row(static_cast<Eigen::Index>(r)) = pool.inputs.row(kept[r]);
    y(static_cast<Eigen::Index>(r)) = pool.outputs(kept[r]);
  }
  OfflineDataset ds = make_dataset(task.name, std::move(x), std::move(y), task.lo, task.hi,
                                   pool.outputs.minCoeff(), pool.outputs.maxCoeff());
  ds.seed = seed;
  ds.keep_percentile = keep_percentile;
  ds.pool_size = pool_size;
  return ds;
}

double normalize_score(double y, const OfflineDataset& ds) {
  if (!(ds.pool_max > ds.pool_min)) throw InvalidArgument("normalize_score: degenerate pool range");
  return (y - ds.pool_min) / (ds.pool_max - ds.pool_min);
}

BestValue d_best(const OfflineDataset& ds) {
  if (ds.size() == 0) throw InvalidArgument("d_best: empty dataset");
  const double raw = ds.outputs.maxCoeff();
  return {raw, normalize_score(raw, ds)};
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_vec(const Vector& v) {
  std::string s;
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += fmt17(v(i));
  }
  return s;
}

Vector split_vec(const std::string& s) {
  std::vector<double> vals;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) vals.push_back(parse_double(tok));
  return Eigen::Map<Vector>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

std::filesystem::path meta_path(const std::filesystem::path& csv) {
  auto p = csv;
  p += ".meta";
  return p;
}

}  // namespace

std::string dataset_csv(const OfflineDataset& ds) {
  std::string out;
  for (int j = 0; j < ds.dim(); ++j) out += "x" + std::to_string(j) + ",";
  out += "y\n";
  for (int i = 0; i < ds.size(); ++i) {
    for (int j = 0; j < ds.dim(); ++j) out += fmt17(ds.inputs(i, j)) + ",";
    out += fmt17(ds.outputs(i)) + "\n";
  }
  return out;
}

std::string dataset_fingerprint(const OfflineDataset& ds) {
  std::string meta = ds.task_name + "|" + fmt17(ds.pool_min) + "|" + fmt17(ds.pool_max) + "|" +
                     join_vec(ds.lo) + "|" + join_vec(ds.hi);
  return content_hash(dataset_csv(ds) + meta);
}

void save_dataset(const OfflineDataset& ds, const std::filesystem::path& csv_path,
                  const std::string& config_hash) {
  write_file(csv_path, dataset_csv(ds));
  std::string m;
  m += "task=" + ds.task_name + "\n";
  m += "d=" + std::to_string(ds.dim()) + "\n";
  m += "n=" + std::to_string(ds.size()) + "\n";
  m += "pool_size=" + std::to_string(ds.pool_size) + "\n";
  m += "pool_min=" + fmt17(ds.pool_min) + "\n";
  m += "pool_max=" + fmt17(ds.pool_max) + "\n";
  m += "input_mean=" + join_vec(ds.input_mean) + "\n";
  m += "input_std=" + join_vec(ds.input_std) + "\n";
  m += "output_mean=" + fmt17(ds.output_mean) + "\n";
  m += "output_std=" + fmt17(ds.output_std) + "\n";
  m += "box_lo=" + join_vec(ds.lo) + "\n";
  m += "box_hi=" + join_vec(ds.hi) + "\n";
  m += "seed=" + std::to_string(ds.seed) + "\n";
  m += "keep_percentile=" + fmt17(ds.keep_percentile) + "\n";
  if (!config_hash.empty()) m += "config_hash=" + config_hash + "\n";
  write_file(meta_path(csv_path), m);
}

OfflineDataset load_dataset(const std::filesystem::path& csv_path) {
  std::map<std::string, std::string> meta;
  {
    std::istringstream in(read_file(meta_path(csv_path)));
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty() || line[0] == '#') continue;
      auto eq = line.find('=');
      if (eq == std::string::npos) throw FormatError("bad metadata line: " + line);
      meta[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  auto need = [&](const std::string& k) -> const std::string& {
    auto it = meta.find(k);
    if (it == meta.end()) throw FormatError("dataset metadata lacks '" + k + "'");
    return it->second;
  };
  const int d = std::stoi(need("d"));
  std::istringstream in(read_file(csv_path));
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty dataset csv");
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) row.push_back(parse_double(tok));
    if (static_cast<int>(row.size()) != d + 1) throw FormatError("dataset row has wrong column count");
    rows.push_back(std::move(row));
  }
  Matrix x(static_cast<Eigen::Index>(rows.size()), d);
  Vector y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (int j = 0; j < d; ++j) x(static_cast<Eigen::Index>(i), j) = rows[i][j];
    y(static_cast<Eigen::Index>(i)) = rows[i][d];
  }
  OfflineDataset ds = make_dataset(need("task"), std::move(x), std::move(y), split_vec(need("box_lo")),
                                   split_vec(need("box_hi")), parse_double(need("pool_min")),
                                   parse_double(need("pool_max")));
  ds.input_mean = split_vec(need("input_mean"));
  ds.input_std = split_vec(need("input_std"));
  ds.output_mean = parse_double(need("output_mean"));
  ds.output_std = parse_double(need("output_std"));
  ds.seed = std::stoull(need("seed"));
  ds.keep_percentile = parse_double(need("keep_percentile"));
  ds.pool_size = std::stoi(need("pool_size"));
  if (std::stoi(need("n")) != ds.size()) throw FormatError("metadata n disagrees with csv rows");
  return ds;
}

}  // namespace pgs
