#include "pgs/search.hpp"

#include <algorithm>
#include <numeric>

#include "pgs/error.hpp"

namespace pgs {

SearchTrace BatchSearch::trace(int i) const {
  SearchTrace t;
  for (const Matrix& s : states) t.states.push_back(s.row(i).transpose());
  for (Eigen::Index k = 0; k < values.cols(); ++k) t.values.push_back(values(i, k));
  for (Eigen::Index k = 0; k < action_norms.cols(); ++k) t.action_norms.push_back(action_norms(i, k));
  t.clamp_events = clamp_events;
  return t;
}

std::vector<double> BatchSearch::mean_action_norms() const {
  std::vector<double> out;
  for (Eigen::Index k = 0; k < action_norms.cols(); ++k) out.push_back(action_norms.col(k).mean());
  return out;
}

BatchSearch guided_search(const Matrix& starts, const Surrogate& s, const StepPolicy& policy, int T) {
  if (T < 0) throw InvalidArgument("search length must be non-negative");
  if (starts.cols() != s.dim()) throw DimensionMismatch("search: start dimension mismatch");
  const Eigen::Index N = starts.rows();
  BatchSearch out;
  out.states.reserve(static_cast<std::size_t>(T) + 1);
  out.states.push_back(starts);
  out.values.resize(N, T + 1);
  out.action_norms.resize(N, T);
  out.values.col(0) = surrogate_values(s, starts);
  for (int k = 1; k <= T; ++k) {
    const Matrix& x = out.states.back();
    const Matrix alpha = policy(x);
    if (alpha.rows() != N || alpha.cols() != x.cols()) throw DimensionMismatch("policy returned wrong shape");
    Matrix next = x + alpha.cwiseProduct(surrogate_grad_batch(s, x));
    Matrix clamped = next;
    for (Eigen::Index i = 0; i < N; ++i) {
      for (Eigen::Index j = 0; j < next.cols(); ++j) {
        clamped(i, j) = std::clamp(next(i, j), s.lo(j), s.hi(j));
        if (clamped(i, j) != next(i, j)) ++out.clamp_events;
      }
    }
    out.action_norms.col(k - 1) = alpha.rowwise().norm();
    out.values.col(k) = surrogate_values(s, clamped);
    out.states.push_back(std::move(clamped));
  }
  return out;
}

BatchSearch pgs_search_batch(const Matrix& starts, const Surrogate& s, const Agent& agent, int T) {
  if (agent.dim() != s.dim()) throw DimensionMismatch("agent and surrogate dimensions differ");
  return guided_search(
      starts, s, [&](const Matrix& x) { return policy_act_batch(agent, x, true); }, T);
}

SearchTrace pgs_search(const Vector& x0, const Surrogate& s, const Agent& agent, int T) {
  return pgs_search_batch(x0.transpose(), s, agent, T).trace(0);
}

BatchSearch grad_baseline_batch(const Matrix& starts, const Surrogate& s, int T, double eta) {
  return guided_search(
      starts, s, [eta](const Matrix& x) { return Matrix::Constant(x.rows(), x.cols(), eta); }, T);
}

SearchTrace grad_baseline(const Vector& x0, const Surrogate& s, int T, double eta) {
  return grad_baseline_batch(x0.transpose(), s, T, eta).trace(0);
}

Matrix pick_starts(const OfflineDataset& ds, int N) {
  if (N < 1 || N > ds.size()) {
    throw InvalidArgument("pick_starts: N=" + std::to_string(N) + " outside [1, " + std::to_string(ds.size()) + "]");
  }
  std::vector<int> order(ds.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return ds.outputs(a) > ds.outputs(b); });
  Matrix out(N, ds.dim());
  for (int i = 0; i < N; ++i) out.row(i) = ds.inputs.row(order[i]);
  return out;
}

CandidateScores evaluate_candidates(const Task& task, const OfflineDataset& ds, const Matrix& candidates) {
  if (candidates.rows() == 0) throw InvalidArgument("evaluate_candidates: no candidates");
  std::vector<double> scores;
  scores.reserve(static_cast<std::size_t>(candidates.rows()));
  for (Eigen::Index i = 0; i < candidates.rows(); ++i) {
    scores.push_back(normalize_score(oracle_eval(task, candidates.row(i).transpose()), ds));
  }
  std::sort(scores.begin(), scores.end());
  const std::size_t n = scores.size();
  const double median = n % 2 ? scores[n / 2] : 0.5 * (scores[n / 2 - 1] + scores[n / 2]);
  return {scores.back(), median};
}

}  // namespace pgs
