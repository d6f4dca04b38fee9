#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pgs/numerics.hpp"
#include "pgs/surrogate.hpp"
#include "pgs/tasks.hpp"

namespace pgs {

// A trajectory is an ordered list of distinct dataset row indices.
using Trajectory = std::vector<int>;

// Per-dimension step-size limit |alpha_j| <= a_max.
struct ActionBound {
  double a_max = 0.05;
};

inline constexpr double kDefaultGradEps = 1e-6;

// The ceil(p * n / 100) highest-y indices, best first, ties by index.
std::vector<int> select_top_p(const OfflineDataset& ds, double p);

// m uniform orderings of T distinct members of `top`. Trajectory i draws from
// its own RNG stream derived from (seed, i). With `monotonic` each sampled
// subset is sorted ascending by y before it is emitted.
std::vector<Trajectory> synthesize_trajectories(const std::vector<int>& top, int m, int T, std::uint64_t seed,
                                                const OfflineDataset* ds = nullptr, bool monotonic = false);

struct RecoveredAction {
  Vector alpha;
  std::vector<bool> masked;   // |g_j| <= eps_g, alpha_j forced to 0
  std::vector<bool> clipped;  // |alpha_j| exceeded a_max
  int mask_count() const;
  int clip_count() const;
};

// alpha_j = (x_next_j - x_j) / g_j where |g_j| > eps_g, else 0 (masked);
// then clipped to +-a_max.
RecoveredAction recover_action(const Vector& x, const Vector& x_next, const Vector& g, const ActionBound& bound,
                               double eps_g = kDefaultGradEps);

// x + alpha .* grad f_hat(x), projected onto the surrogate's box.
Vector transition(const Vector& x, const Vector& alpha, const Surrogate& s, bool* clamped = nullptr);
Matrix transition_batch(const Matrix& x, const Matrix& alpha, const Surrogate& s);

struct TransitionStats {
  double mean_abs_action = 0.0;
  double clip_rate = 0.0;  // fraction of (tuple, dim) entries clipped
  double mask_rate = 0.0;  // fraction of (tuple, dim) entries masked
};

struct TransitionSet {
  Matrix states;       // N x d, raw x
  Matrix actions;      // N x d, alpha
  Matrix next_states;  // N x d
  Vector rewards;      // z(y') - z(y)
  std::vector<int> mask_count;
  std::vector<std::uint8_t> clipped;  // N x d flags, row-major
  std::vector<std::uint8_t> masked;   // N x d flags, row-major
  std::vector<int> source_index;      // dataset row of each state
  std::vector<int> trajectory_id;
  double a_max = 0.05;
  TransitionStats stats;

  int size() const { return static_cast<int>(rewards.size()); }
  int dim() const { return static_cast<int>(states.cols()); }
  bool is_clipped(int i, int j) const { return clipped[static_cast<std::size_t>(i) * dim() + j] != 0; }
  bool is_masked(int i, int j) const { return masked[static_cast<std::size_t>(i) * dim() + j] != 0; }
};

// One tuple per consecutive pair in every trajectory.
TransitionSet build_transition_set(const std::vector<Trajectory>& trajectories, const Surrogate& s,
                                   const OfflineDataset& ds, const ActionBound& bound,
                                   double eps_g = kDefaultGradEps);

// CSV with columns s0..,a0..,sn0..,r,mask_count plus a key=value sidecar.
struct TransitionMeta {
  double p = 0.0;
  int T = 0;
  int m = 0;
  std::uint64_t seed = 0;
  std::string surrogate_hash;
  std::string config_hash;
};
void save_transitions(const TransitionSet& set, const TransitionMeta& meta, const std::filesystem::path& csv);
TransitionSet load_transitions(const std::filesystem::path& csv, TransitionMeta* meta = nullptr);

// Mixes a master seed with a stream id (splitmix64 finaliser).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

}  // namespace pgs
