#include "pgs/trajectories.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "pgs/checkpoint.hpp"
#include "pgs/error.hpp"

namespace pgs {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::vector<int> select_top_p(const OfflineDataset& ds, double p) {
  if (!(p > 0.0 && p <= 100.0)) throw InvalidArgument("top-p percentile must lie in (0, 100]");
  const int n = ds.size();
  const int k = std::min(n, static_cast<int>(std::ceil(p * n / 100.0 - 1e-9)));
  if (k < 2) throw TooSmallDataset("top-p subset has fewer than 2 points");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return ds.outputs(a) > ds.outputs(b); });
  order.resize(k);
  return order;
}

std::vector<Trajectory> synthesize_trajectories(const std::vector<int>& top, int m, int T, std::uint64_t seed,
                                                const OfflineDataset* ds, bool monotonic) {
  if (T < 1 || m < 0) throw InvalidArgument("trajectory count and length must be positive");
  if (static_cast<std::size_t>(T) > top.size()) {
    throw InfeasibleTrajectory("trajectory length " + std::to_string(T) + " exceeds the " +
                               std::to_string(top.size()) + " available points");
  }
  if (monotonic && !ds) throw InvalidArgument("monotonic trajectories need the dataset outputs");
  std::vector<Trajectory> out(static_cast<std::size_t>(m));
  std::vector<int> pool(top);
  for (int i = 0; i < m; ++i) {
    std::mt19937_64 rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    std::copy(top.begin(), top.end(), pool.begin());
    // Partial Fisher-Yates: the first T slots become a uniform ordered sample.
    for (int k = 0; k < T; ++k) {
      std::uniform_int_distribution<int> pick(k, static_cast<int>(pool.size()) - 1);
      std::swap(pool[k], pool[pick(rng)]);
    }
    Trajectory t(pool.begin(), pool.begin() + T);
    if (monotonic) {
      std::stable_sort(t.begin(), t.end(), [&](int a, int b) { return ds->outputs(a) < ds->outputs(b); });
    }
    out[static_cast<std::size_t>(i)] = std::move(t);
  }
  return out;
}

int RecoveredAction::mask_count() const { return static_cast<int>(std::count(masked.begin(), masked.end(), true)); }
int RecoveredAction::clip_count() const {
  return static_cast<int>(std::count(clipped.begin(), clipped.end(), true));
}

RecoveredAction recover_action(const Vector& x, const Vector& x_next, const Vector& g, const ActionBound& bound,
                               double eps_g) {
  if (x.size() != x_next.size() || x.size() != g.size()) throw DimensionMismatch("recover_action: length mismatch");
  if (!(eps_g > 0.0)) throw InvalidArgument("recover_action: eps_g must be positive");
  const Eigen::Index d = x.size();
  RecoveredAction r{Vector::Zero(d), std::vector<bool>(d, false), std::vector<bool>(d, false)};
  for (Eigen::Index j = 0; j < d; ++j) {
    if (std::abs(g(j)) <= eps_g) {
      r.masked[j] = true;
      continue;
    }
    double a = (x_next(j) - x(j)) / g(j);
    if (std::abs(a) > bound.a_max) {
      a = std::copysign(bound.a_max, a);
      r.clipped[j] = true;
    }
    r.alpha(j) = a;
  }
  return r;
}

Vector transition(const Vector& x, const Vector& alpha, const Surrogate& s, bool* clamped) {
  if (alpha.size() != x.size()) throw DimensionMismatch("transition: action length mismatch");
  return clamp_to_box(x + alpha.cwiseProduct(surrogate_grad(s, x)), s.lo, s.hi, clamped);
}

Matrix transition_batch(const Matrix& x, const Matrix& alpha, const Surrogate& s) {
  if (alpha.rows() != x.rows() || alpha.cols() != x.cols()) throw DimensionMismatch("transition: shape mismatch");
  Matrix next = x + alpha.cwiseProduct(surrogate_grad_batch(s, x));
  for (Eigen::Index i = 0; i < next.rows(); ++i) {
    for (Eigen::Index j = 0; j < next.cols(); ++j) next(i, j) = std::clamp(next(i, j), s.lo(j), s.hi(j));
  }
  return next;
}

TransitionSet build_transition_set(const std::vector<Trajectory>& trajectories, const Surrogate& s,
                                   const OfflineDataset& ds, const ActionBound& bound, double eps_g) {
  if (trajectories.empty()) throw InvalidArgument("build_transition_set: no trajectories");
  if (s.dim() != ds.dim()) throw DimensionMismatch("surrogate and dataset dimensions differ");
  std::size_t total = 0;
  for (const auto& t : trajectories) total += t.size() > 1 ? t.size() - 1 : 0;
  const int d = ds.dim();
  const auto N = static_cast<Eigen::Index>(total);

  const Matrix grads = surrogate_grad_batch(s, ds.inputs);
  Vector zy(ds.size());
  for (int i = 0; i < ds.size(); ++i) zy(i) = ds.z_output(ds.outputs(i));

  TransitionSet set;
  set.a_max = bound.a_max;
  set.states.resize(N, d);
  set.actions.resize(N, d);
  set.next_states.resize(N, d);
  set.rewards.resize(N);
  set.mask_count.reserve(total);
  set.clipped.assign(total * d, 0);
  set.masked.assign(total * d, 0);
  set.source_index.reserve(total);
  set.trajectory_id.reserve(total);

  long clips = 0, masks = 0;
  double abs_sum = 0.0;
  Eigen::Index row = 0;
  for (std::size_t t = 0; t < trajectories.size(); ++t) {
    const Trajectory& tr = trajectories[t];
    for (std::size_t k = 1; k < tr.size(); ++k, ++row) {
      const int a = tr[k - 1], b = tr[k];
      const Vector x = ds.input(a), xn = ds.input(b);
      RecoveredAction act = recover_action(x, xn, grads.row(a).transpose(), bound, eps_g);
      set.states.row(row) = x.transpose();
      set.next_states.row(row) = xn.transpose();
      set.actions.row(row) = act.alpha.transpose();
      set.rewards(row) = zy(b) - zy(a);
      for (int j = 0; j < d; ++j) {
        set.clipped[static_cast<std::size_t>(row) * d + j] = act.clipped[j];
        set.masked[static_cast<std::size_t>(row) * d + j] = act.masked[j];
      }
      const int mc = act.mask_count();
      set.mask_count.push_back(mc);
      masks += mc;
      clips += act.clip_count();
      abs_sum += act.alpha.cwiseAbs().sum();
      set.source_index.push_back(a);
      set.trajectory_id.push_back(static_cast<int>(t));
    }
  }
  const double cells = static_cast<double>(total) * d;
  if (cells > 0) {
    set.stats.mean_abs_action = abs_sum / cells;
    set.stats.clip_rate = static_cast<double>(clips) / cells;
    set.stats.mask_rate = static_cast<double>(masks) / cells;
  }
  return set;
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void save_transitions(const TransitionSet& set, const TransitionMeta& meta, const std::filesystem::path& csv) {
  const int d = set.dim();
  std::string out;
  for (int j = 0; j < d; ++j) out += "s" + std::to_string(j) + ",";
  for (int j = 0; j < d; ++j) out += "a" + std::to_string(j) + ",";
  for (int j = 0; j < d; ++j) out += "sn" + std::to_string(j) + ",";
  out += "r,mask_count\n";
  for (int i = 0; i < set.size(); ++i) {
    for (int j = 0; j < d; ++j) out += fmt17(set.states(i, j)) + ",";
    for (int j = 0; j < d; ++j) out += fmt17(set.actions(i, j)) + ",";
    for (int j = 0; j < d; ++j) out += fmt17(set.next_states(i, j)) + ",";
    out += fmt17(set.rewards(i)) + "," + std::to_string(set.mask_count[i]) + "\n";
  }
  write_file(csv, out);
  std::string m;
  m += "d=" + std::to_string(d) + "\n";
  m += "tuples=" + std::to_string(set.size()) + "\n";
  m += "p=" + fmt17(meta.p) + "\n";
  m += "T=" + std::to_string(meta.T) + "\n";
  m += "m=" + std::to_string(meta.m) + "\n";
  m += "seed=" + std::to_string(meta.seed) + "\n";
  m += "a_max=" + fmt17(set.a_max) + "\n";
  m += "mean_abs_action=" + fmt17(set.stats.mean_abs_action) + "\n";
  m += "clip_rate=" + fmt17(set.stats.clip_rate) + "\n";
  m += "mask_rate=" + fmt17(set.stats.mask_rate) + "\n";
  m += "surrogate_hash=" + meta.surrogate_hash + "\n";
  if (!meta.config_hash.empty()) m += "config_hash=" + meta.config_hash + "\n";
  auto mp = csv;
  mp += ".meta";
  write_file(mp, m);
}

TransitionSet load_transitions(const std::filesystem::path& csv, TransitionMeta* meta) {
  auto mp = csv;
  mp += ".meta";
  std::map<std::string, std::string> kv;
  {
    std::istringstream in(read_file(mp));
    std::string line;
    while (std::getline(in, line)) {
      auto eq = line.find('=');
      if (eq != std::string::npos) kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
  }
  if (!kv.count("d") || !kv.count("a_max")) throw FormatError("transition metadata lacks d/a_max");
  const int d = std::stoi(kv["d"]);
  std::istringstream in(read_file(csv));
  std::string line;
  std::getline(in, line);
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string tok;
    while (std::getline(ss, tok, ',')) row.push_back(parse_double(tok));
    if (static_cast<int>(row.size()) != 3 * d + 2) throw FormatError("transition row has wrong column count");
    rows.push_back(std::move(row));
  }
  TransitionSet set;
  const auto N = static_cast<Eigen::Index>(rows.size());
  set.a_max = parse_double(kv["a_max"]);
  set.states.resize(N, d);
  set.actions.resize(N, d);
  set.next_states.resize(N, d);
  set.rewards.resize(N);
  set.clipped.assign(rows.size() * d, 0);
  set.masked.assign(rows.size() * d, 0);
  for (Eigen::Index i = 0; i < N; ++i) {
    const auto& r = rows[static_cast<std::size_t>(i)];
    for (int j = 0; j < d; ++j) {
      set.states(i, j) = r[j];
      set.actions(i, j) = r[d + j];
      set.next_states(i, j) = r[2 * d + j];
      // Per-dimension mask flags are not stored; clip flags follow from the bound.
      set.clipped[static_cast<std::size_t>(i) * d + j] = std::abs(r[d + j]) == set.a_max;
    }
    set.rewards(i) = r[3 * d];
    set.mask_count.push_back(static_cast<int>(r[3 * d + 1]));
    set.source_index.push_back(-1);
    set.trajectory_id.push_back(-1);
  }
  if (kv.count("mean_abs_action")) set.stats.mean_abs_action = parse_double(kv["mean_abs_action"]);
  if (kv.count("clip_rate")) set.stats.clip_rate = parse_double(kv["clip_rate"]);
  if (kv.count("mask_rate")) set.stats.mask_rate = parse_double(kv["mask_rate"]);
  if (meta) {
    meta->p = kv.count("p") ? parse_double(kv["p"]) : 0.0;
    meta->T = kv.count("T") ? std::stoi(kv["T"]) : 0;
    meta->m = kv.count("m") ? std::stoi(kv["m"]) : 0;
    meta->seed = kv.count("seed") ? std::stoull(kv["seed"]) : 0;
    meta->surrogate_hash = kv["surrogate_hash"];
    meta->config_hash = kv["config_hash"];
  }
  return set;
}

}  // namespace pgs
