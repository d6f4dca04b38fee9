#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "pgs/numerics.hpp"
#include "pgs/trajectories.hpp"

namespace pgs {

struct CqlConfig {
  int epochs = 100;
  // Gradient steps per epoch. One "epoch" is a fixed number of updates, not a
  // pass over the transition set.
  int steps_per_epoch = 50;
  int batch_size = 256;
  double actor_lr = 3e-4;
  double critic_lr = 3e-4;
  double temperature_lr = 3e-4;
  double gamma = 0.99;
  double polyak = 0.005;
  double w_cons = 5.0;       // 0 turns the learner into plain SAC
  int sampled_actions = 10;  // M: half uniform, half from the policy
  int checkpoint_interval = 50;
  int hidden_width = 256;
  int hidden_layers = 2;
  double initial_temperature = 1.0;
  bool auto_temperature = true;
  bool backup_entropy = true;

  void validate() const;
  std::string canonical() const;
};

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

// Squashed-Gaussian actor over per-dimension step sizes and twin critics.
// Networks see z-scored states and actions scaled to [-1, 1] by a_max.
struct Agent {
  Mlp actor;  // d -> 2d: mean and log-std heads
  Mlp q1, q2;
  Mlp q1_target, q2_target;
  double log_temperature = 0.0;
  ActionBound bound;
  double gamma = 0.99;
  Vector state_mean, state_std;

  int dim() const { return actor.input_dim(); }
  double temperature() const;
  friend bool operator==(const Agent& a, const Agent& b);
};

Agent make_agent(int d, const CqlConfig& cfg, const ActionBound& bound, std::uint64_t seed,
                 const Vector& state_mean, const Vector& state_std);

// A mini-batch drawn from a transition set.
struct TransitionBatch {
  Matrix states;
  Matrix actions;  // raw alpha
  Matrix next_states;
  Vector rewards;
};
TransitionBatch sample_batch(const TransitionSet& set, int size, std::mt19937_64& rng);
TransitionBatch batch_rows(const TransitionSet& set, int begin, int end);

struct CriticLoss {
  double loss = 0.0;              // sum over both critics of w_cons * gap + td
  double td_loss = 0.0;           // mean over the twins
  double conservative_gap = 0.0;  // mean over the twins (0 when w_cons == 0)
  double q_data_mean = 0.0;
};

// Conservative critic objective. Gradients for q1/q2 are accumulated when the
// pointers are non-null. Sampled actions are drawn from `rng`; when w_cons is 0
// the conservative term and its sampling are skipped.
CriticLoss cql_critic_loss(const TransitionBatch& batch, const Agent& agent, const CqlConfig& cfg,
                           std::mt19937_64& rng, MlpGrads* q1_grads = nullptr, MlpGrads* q2_grads = nullptr);

struct EpochLog {
  int epoch = 0;
  double critic_loss = 0.0;
  double td_loss = 0.0;
  double conservative_gap = 0.0;
  double actor_loss = 0.0;
  double temperature = 0.0;
};

struct AgentCheckpoint {
  int epoch = 0;
  Agent agent;
};

struct TrainResult {
  Agent agent;
  std::vector<AgentCheckpoint> checkpoints;  // one per completed multiple of checkpoint_interval
  std::vector<EpochLog> log;
  bool aborted = false;  // numeric failure; `agent` is the last good epoch
  std::string failure;
};

TrainResult cql_train(const TransitionSet& set, const CqlConfig& cfg, std::uint64_t seed);
// Soft actor-critic on the same data: cql_train with w_cons = 0.
TrainResult sac_train(const TransitionSet& set, const CqlConfig& cfg, std::uint64_t seed);

// Deterministic mode returns a_max * tanh(mean); stochastic mode samples.
Vector policy_act(const Agent& agent, const Vector& x, bool deterministic, std::mt19937_64* rng = nullptr);
Matrix policy_act_batch(const Agent& agent, const Matrix& states, bool deterministic,
                        std::mt19937_64* rng = nullptr);

// Columns: q1, q2 at (state, raw action) rows.
Matrix critic_values(const Agent& agent, const Matrix& states, const Matrix& actions);

void save_agent(const Agent& agent, const std::filesystem::path& path, const std::string& config_hash = "");
Agent load_agent(const std::filesystem::path& path);

}  // namespace pgs
