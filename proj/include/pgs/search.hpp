#pragma once

#include <functional>
#include <vector>

#include "pgs/agents.hpp"
#include "pgs/numerics.hpp"
#include "pgs/surrogate.hpp"
#include "pgs/tasks.hpp"

namespace pgs {

// Maps a batch of current states (one per row) to step-size vectors.
using StepPolicy = std::function<Matrix(const Matrix& states)>;

struct SearchTrace {
  std::vector<Vector> states;        // x_0 .. x_T
  std::vector<double> values;        // surrogate value at each state
  std::vector<double> action_norms;  // ||alpha_k||_2 for k = 0 .. T-1
  int clamp_events = 0;

  const Vector& final_state() const { return states.back(); }
  int steps() const { return static_cast<int>(action_norms.size()); }
};

// All N searches advanced in lock-step.
struct BatchSearch {
  std::vector<Matrix> states;  // T+1 entries, each N x d
  Matrix values;               // N x (T+1)
  Matrix action_norms;         // N x T
  int clamp_events = 0;

  const Matrix& final_states() const { return states.back(); }
  SearchTrace trace(int i) const;
  // Mean over searches of ||alpha|| at each step.
  std::vector<double> mean_action_norms() const;
};

// x_k = clamp(x_{k-1} + policy(x_{k-1}) .* grad f_hat(x_{k-1})) for T steps.
BatchSearch guided_search(const Matrix& starts, const Surrogate& s, const StepPolicy& policy, int T);

// Policy-guided search with deterministic actions.
SearchTrace pgs_search(const Vector& x0, const Surrogate& s, const Agent& agent, int T);
BatchSearch pgs_search_batch(const Matrix& starts, const Surrogate& s, const Agent& agent, int T);

// Fixed scalar step: x_k = x_{k-1} + eta * grad f_hat.
inline constexpr double kDefaultGradStep = 0.05;
SearchTrace grad_baseline(const Vector& x0, const Surrogate& s, int T, double eta = kDefaultGradStep);
BatchSearch grad_baseline_batch(const Matrix& starts, const Surrogate& s, int T, double eta = kDefaultGradStep);

inline constexpr int kDefaultNumStarts = 128;

// The N highest-y offline inputs, best first (stable on ties).
Matrix pick_starts(const OfflineDataset& ds, int N);

struct CandidateScores {
  double score100 = 0.0;  // best normalised oracle value
  double score50 = 0.0;   // median normalised oracle value
};
CandidateScores evaluate_candidates(const Task& task, const OfflineDataset& ds, const Matrix& candidates);

}  // namespace pgs
