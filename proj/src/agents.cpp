#include "pgs/agents.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "pgs/checkpoint.hpp"
#include "pgs/error.hpp"

namespace pgs {

void CqlConfig::validate() const {
  if (epochs < 1 || steps_per_epoch < 1 || batch_size < 1 || checkpoint_interval < 1 || hidden_width < 1 ||
      hidden_layers < 0 || sampled_actions < 1) {
    throw InvalidArgument("agent config: counts must be positive");
  }
  if (!(actor_lr > 0 && critic_lr > 0 && temperature_lr > 0 && initial_temperature > 0)) {
    throw InvalidArgument("agent config: learning rates and temperature must be positive");
  }
  if (!(gamma >= 0 && gamma < 1)) throw InvalidArgument("agent config: gamma must lie in [0, 1)");
  if (!(polyak > 0 && polyak < 1)) throw InvalidArgument("agent config: polyak must lie in (0, 1)");
  if (!(w_cons >= 0)) throw InvalidArgument("agent config: w_cons must be non-negative");
}

std::string CqlConfig::canonical() const {
  std::ostringstream ss;
  ss.precision(17);
  ss << "epochs=" << epochs << ";steps=" << steps_per_epoch << ";batch=" << batch_size << ";alr=" << actor_lr
     << ";clr=" << critic_lr << ";tlr=" << temperature_lr << ";gamma=" << gamma << ";polyak=" << polyak
     << ";w=" << w_cons << ";M=" << sampled_actions << ";ckpt=" << checkpoint_interval << ";h=" << hidden_width
     << "x" << hidden_layers << ";t0=" << initial_temperature << ";auto=" << auto_temperature
     << ";backup=" << backup_entropy;
  return ss.str();
}

double Agent::temperature() const { return std::exp(log_temperature); }

bool operator==(const Agent& a, const Agent& b) {
  return a.actor == b.actor && a.q1 == b.q1 && a.q2 == b.q2 && a.q1_target == b.q1_target &&
         a.q2_target == b.q2_target && a.log_temperature == b.log_temperature && a.bound.a_max == b.bound.a_max &&
         a.gamma == b.gamma && a.state_mean == b.state_mean && a.state_std == b.state_std;
}

namespace {

std::vector<int> hidden_dims(int in, int width, int layers, int out) {
  std::vector<int> dims{in};
  for (int l = 0; l < layers; ++l) dims.push_back(width);
  dims.push_back(out);
  return dims;
}

Matrix normalize_states(const Agent& a, const Matrix& s) {
  return (s.rowwise() - a.state_mean.transpose()).array().rowwise() / a.state_std.transpose().array();
}

Matrix hstack(const Matrix& left, const Matrix& right) {
  Matrix out(left.rows(), left.cols() + right.cols());
  out << left, right;
  return out;
}

// Output of the squashed-Gaussian actor for a batch of states.
struct PolicyPass {
  Matrix mean;
  Matrix log_std;
  Matrix std;
  Matrix log_std_active;  // 1 where the raw log-std head lies inside the clamp range
  Matrix eps;
  Matrix action;  // tanh(u) in [-1, 1]
  Vector log_prob;
  MlpTape tape;
};

PolicyPass run_policy(const Mlp& actor, const Matrix& zs, std::mt19937_64& rng, bool deterministic) {
  const Eigen::Index B = zs.rows();
  const Eigen::Index d = actor.output_dim() / 2;
  PolicyPass p;
  Matrix out = actor.forward_batch(zs, &p.tape);
  p.mean = out.leftCols(d);
  Matrix raw = out.rightCols(d);
  p.log_std = raw.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
  p.log_std_active = ((raw.array() >= kLogStdMin) && (raw.array() <= kLogStdMax)).cast<double>();
  p.std = p.log_std.array().exp();
  p.eps = Matrix::Zero(B, d);
  if (!deterministic) {
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Eigen::Index b = 0; b < B; ++b)
      for (Eigen::Index j = 0; j < d; ++j) p.eps(b, j) = normal(rng);
  }
  Matrix u = p.mean + p.std.cwiseProduct(p.eps);
  p.action = u.array().tanh();
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  p.log_prob = (-0.5 * p.eps.array().square() - p.log_std.array() - half_log_2pi -
                (1.0 - p.action.array().square() + 1e-6).log())
                   .rowwise()
                   .sum();
  return p;
}

void check_batch(const TransitionBatch& batch, int d) {
  if (batch.states.rows() == 0) throw InvalidArgument("critic loss: empty batch");
  if (batch.states.cols() != d || batch.actions.cols() != d || batch.next_states.cols() != d) {
    throw DimensionMismatch("critic loss: batch dimension does not match the agent");
  }
}

}  // namespace

Agent make_agent(int d, const CqlConfig& cfg, const ActionBound& bound, std::uint64_t seed,
                 const Vector& state_mean, const Vector& state_std) {
  if (d < 1) throw InvalidArchitecture("agent dimension must be positive");
  Agent a;
  a.actor = Mlp::init(hidden_dims(d, cfg.hidden_width, cfg.hidden_layers, 2 * d), derive_seed(seed, 1));
  a.q1 = Mlp::init(hidden_dims(2 * d, cfg.hidden_width, cfg.hidden_layers, 1), derive_seed(seed, 2));
  a.q2 = Mlp::init(hidden_dims(2 * d, cfg.hidden_width, cfg.hidden_layers, 1), derive_seed(seed, 3));
  a.q1_target = a.q1;
  a.q2_target = a.q2;
  a.log_temperature = std::log(cfg.initial_temperature);
  a.bound = bound;
  a.gamma = cfg.gamma;
  a.state_mean = state_mean.size() == d ? state_mean : Vector::Zero(d);
  a.state_std = state_std.size() == d ? state_std : Vector::Ones(d);
  return a;
}

TransitionBatch batch_rows(const TransitionSet& set, int begin, int end) {
  const int len = end - begin;
  return {set.states.middleRows(begin, len), set.actions.middleRows(begin, len),
          set.next_states.middleRows(begin, len), set.rewards.segment(begin, len)};
}

TransitionBatch sample_batch(const TransitionSet& set, int size, std::mt19937_64& rng) {
  std::uniform_int_distribution<int> pick(0, set.size() - 1);
  const int d = set.dim();
  TransitionBatch b{Matrix(size, d), Matrix(size, d), Matrix(size, d), Vector(size)};
  for (int r = 0; r < size; ++r) {
    const int i = pick(rng);
    b.states.row(r) = set.states.row(i);
    b.actions.row(r) = set.actions.row(i);
    b.next_states.row(r) = set.next_states.row(i);
    b.rewards(r) = set.rewards(i);
  }
  return b;
}

CriticLoss cql_critic_loss(const TransitionBatch& batch, const Agent& agent, const CqlConfig& cfg,
                           std::mt19937_64& rng, MlpGrads* q1_grads, MlpGrads* q2_grads) {
  const int d = agent.dim();
  check_batch(batch, d);
  const Eigen::Index B = batch.states.rows();
  const double temp = agent.temperature();
  const Matrix zs = normalize_states(agent, batch.states);
  const Matrix zsn = normalize_states(agent, batch.next_states);
  const Matrix a_data = batch.actions / agent.bound.a_max;

  // Bootstrapped target from the twin-min target critics with the entropy bonus.
  PolicyPass next = run_policy(agent.actor, zsn, rng, false);
  const Matrix next_in = hstack(zsn, next.action);
  Vector v = agent.q1_target.forward_batch(next_in).col(0).cwiseMin(agent.q2_target.forward_batch(next_in).col(0));
  if (cfg.backup_entropy) v -= temp * next.log_prob;
  const Vector y = batch.rewards + agent.gamma * v;

  const bool conservative = cfg.w_cons > 0.0;
  const int M = conservative ? cfg.sampled_actions : 0;
  Matrix inputs(B * (1 + M), 2 * d);
  inputs.topRows(B) = hstack(zs, a_data);
  if (conservative) {
    const int n_uniform = M - M / 2;
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    for (int j = 0; j < n_uniform; ++j) {
      Matrix u(B, d);
      for (Eigen::Index b = 0; b < B; ++b)
        for (int k = 0; k < d; ++k) u(b, k) = unit(rng);
      inputs.middleRows(B * (1 + j), B) = hstack(zs, u);
    }
    for (int j = n_uniform; j < M; ++j) {
      PolicyPass pol = run_policy(agent.actor, zs, rng, false);
      inputs.middleRows(B * (1 + j), B) = hstack(zs, pol.action);
    }
  }

  CriticLoss out;
  const double inv_b = 1.0 / static_cast<double>(B);
  const Mlp* critics[2] = {&agent.q1, &agent.q2};
  MlpGrads* grads[2] = {q1_grads, q2_grads};
  for (int c = 0; c < 2; ++c) {
    MlpTape tape;
    const Matrix q = critics[c]->forward_batch(inputs, &tape);
    const Vector qd = q.col(0).head(B);
    const Vector diff = qd - y;
    const double td = diff.squaredNorm() * inv_b;
    Matrix d_out(inputs.rows(), 1);
    d_out.col(0).head(B) = 2.0 * inv_b * diff;
    double gap = 0.0;
    if (conservative) {
      double lse_sum = 0.0;
      for (Eigen::Index b = 0; b < B; ++b) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < M; ++j) mx = std::max(mx, q(B * (1 + j) + b, 0));
        double s = 0.0;
        for (int j = 0; j < M; ++j) s += std::exp(q(B * (1 + j) + b, 0) - mx);
        const double lse = mx + std::log(s);
        lse_sum += lse;
        for (int j = 0; j < M; ++j) {
          d_out(B * (1 + j) + b, 0) = cfg.w_cons * inv_b * std::exp(q(B * (1 + j) + b, 0) - lse);
        }
      }
      gap = lse_sum * inv_b - qd.mean();
      d_out.col(0).head(B).array() -= cfg.w_cons * inv_b;
      out.loss += cfg.w_cons * gap + td;
    } else {
      out.loss += td;
    }
    out.td_loss += 0.5 * td;
    out.conservative_gap += 0.5 * gap;
    out.q_data_mean += 0.5 * qd.mean();
    if (grads[c]) critics[c]->backward_batch(tape, d_out, grads[c]);
  }
  return out;
}

namespace {

struct ActorStep {
  double loss = 0.0;
  double temperature_grad = 0.0;
};

ActorStep actor_gradients(const Agent& agent, const Matrix& zs, std::mt19937_64& rng, MlpGrads& actor_grads) {
  const int d = agent.dim();
  const Eigen::Index B = zs.rows();
  const double inv_b = 1.0 / static_cast<double>(B);
  const double temp = agent.temperature();
  PolicyPass pol = run_policy(agent.actor, zs, rng, false);
  const Matrix in = hstack(zs, pol.action);
  MlpTape t1, t2;
  const Vector q1 = agent.q1.forward_batch(in, &t1).col(0);
  const Vector q2 = agent.q2.forward_batch(in, &t2).col(0);
  const Vector use_q1 = (q1.array() <= q2.array()).cast<double>();
  const Vector qmin = q1.cwiseMin(q2);

  // dL/dq for L = mean(temp * log_prob - min(q1, q2)).
  const Matrix dq1 = (-inv_b * use_q1).eval();
  const Matrix dq2 = (-inv_b * (Vector::Ones(B) - use_q1)).eval();
  const Matrix g_in = agent.q1.backward_batch(t1, dq1, nullptr) + agent.q2.backward_batch(t2, dq2, nullptr);
  const Matrix g_act = g_in.rightCols(d);

  const Eigen::ArrayXXd a = pol.action.array();
  const Eigen::ArrayXXd one_minus = 1.0 - a.square();
  const Eigen::ArrayXXd squash = 2.0 * a * one_minus / (one_minus + 1e-6);  // d(-log(1 - tanh^2 + 1e-6))/du
  const Eigen::ArrayXXd du = temp * inv_b * squash + g_act.array() * one_minus;
  const Eigen::ArrayXXd sigma_eps = pol.std.array() * pol.eps.array();

  Matrix d_out(B, 2 * d);
  d_out.leftCols(d) = du.matrix();
  d_out.rightCols(d) = ((du * sigma_eps - temp * inv_b) * pol.log_std_active.array()).matrix();
  agent.actor.backward_batch(pol.tape, d_out, &actor_grads);

  ActorStep s;
  s.loss = (temp * pol.log_prob - qmin).mean();
  const double target_entropy = -static_cast<double>(d);
  s.temperature_grad = -(pol.log_prob.array() + target_entropy).mean();
  return s;
}

}  // namespace

TrainResult cql_train(const TransitionSet& set, const CqlConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (set.size() == 0) throw InvalidArgument("cql_train: empty transition set");
  const int d = set.dim();

  Vector mean = set.states.colwise().mean().transpose();
  Vector std = ((set.states.rowwise() - mean.transpose()).array().square().colwise().sum() /
                static_cast<double>(set.size()))
                   .sqrt()
                   .transpose();
  for (Eigen::Index j = 0; j < std.size(); ++j) {
    if (!(std(j) > kMinStd)) std(j) = 1.0;
  }

  TrainResult result;
  Agent agent = make_agent(d, cfg, ActionBound{set.a_max}, seed, mean, std);
  AdamState actor_opt(agent.actor, AdamConfig{.lr = cfg.actor_lr});
  AdamState q1_opt(agent.q1, AdamConfig{.lr = cfg.critic_lr});
  AdamState q2_opt(agent.q2, AdamConfig{.lr = cfg.critic_lr});
  ScalarAdam temp_opt(AdamConfig{.lr = cfg.temperature_lr});
  std::mt19937_64 rng(derive_seed(seed, 4));

  Agent last_good = agent;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    EpochLog log;
    log.epoch = epoch;
    bool failed = false;
    for (int step = 0; step < cfg.steps_per_epoch; ++step) {
      TransitionBatch batch = sample_batch(set, cfg.batch_size, rng);
      MlpGrads g1 = agent.q1.zero_grads(), g2 = agent.q2.zero_grads(), ga = agent.actor.zero_grads();
      CriticLoss cl = cql_critic_loss(batch, agent, cfg, rng, &g1, &g2);
      ActorStep as = actor_gradients(agent, normalize_states(agent, batch.states), rng, ga);
      if (!std::isfinite(cl.loss) || !std::isfinite(as.loss)) {
        failed = true;
        result.failure = "non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step);
        break;
      }
      q1_opt.apply(agent.q1, g1);
      q2_opt.apply(agent.q2, g2);
      actor_opt.apply(agent.actor, ga);
      if (cfg.auto_temperature) temp_opt.apply(agent.log_temperature, as.temperature_grad);
      agent.q1_target.soft_update_from(agent.q1, cfg.polyak);
      agent.q2_target.soft_update_from(agent.q2, cfg.polyak);

      log.critic_loss += cl.loss;
      log.td_loss += cl.td_loss;
      log.conservative_gap += cl.conservative_gap;
      log.actor_loss += as.loss;
    }
    if (failed) {
      result.aborted = true;
      result.agent = last_good;
      return result;
    }
    const double inv = 1.0 / cfg.steps_per_epoch;
    log.critic_loss *= inv;
    log.td_loss *= inv;
    log.conservative_gap *= inv;
    log.actor_loss *= inv;
    log.temperature = agent.temperature();
    result.log.push_back(log);
    last_good = agent;
    if (epoch % cfg.checkpoint_interval == 0) result.checkpoints.push_back({epoch, agent});
  }
  result.agent = std::move(agent);
  return result;
}

TrainResult sac_train(const TransitionSet& set, const CqlConfig& cfg, std::uint64_t seed) {
  CqlConfig plain = cfg;
  plain.w_cons = 0.0;
  return cql_train(set, plain, seed);
}

Matrix policy_act_batch(const Agent& agent, const Matrix& states, bool deterministic, std::mt19937_64* rng) {
  if (states.cols() != agent.dim()) throw DimensionMismatch("policy_act: state dimension mismatch");
  const Matrix zs = normalize_states(agent, states);
  if (deterministic) {
    const Matrix out = agent.actor.forward_batch(zs);
    return agent.bound.a_max * out.leftCols(agent.dim()).array().tanh().matrix();
  }
  if (!rng) throw InvalidArgument("policy_act: stochastic mode needs an rng");
  return agent.bound.a_max * run_policy(agent.actor, zs, *rng, false).action;
}

Vector policy_act(const Agent& agent, const Vector& x, bool deterministic, std::mt19937_64* rng) {
  return policy_act_batch(agent, x.transpose(), deterministic, rng).row(0).transpose();
}

Matrix critic_values(const Agent& agent, const Matrix& states, const Matrix& actions) {
  if (states.cols() != agent.dim() || actions.cols() != agent.dim() || states.rows() != actions.rows()) {
    throw DimensionMismatch("critic_values: shape mismatch");
  }
  const Matrix in = hstack(normalize_states(agent, states), actions / agent.bound.a_max);
  Matrix out(states.rows(), 2);
  out.col(0) = agent.q1.forward_batch(in).col(0);
  out.col(1) = agent.q2.forward_batch(in).col(0);
  return out;
}

void save_agent(const Agent& agent, const std::filesystem::path& path, const std::string& config_hash) {
  CheckpointWriter w;
  w.put_mlp("actor", agent.actor);
  w.put_mlp("q1", agent.q1);
  w.put_mlp("q2", agent.q2);
  w.put_mlp("q1_target", agent.q1_target);
  w.put_mlp("q2_target", agent.q2_target);
  w.put_scalar("log_temperature", agent.log_temperature);
  w.put_scalar("a_max", agent.bound.a_max);
  w.put_scalar("gamma", agent.gamma);
  w.put_vector("state_mean", agent.state_mean);
  w.put_vector("state_std", agent.state_std);
  if (!config_hash.empty()) w.put_string("config_hash", config_hash);
  w.save(path);
}

Agent load_agent(const std::filesystem::path& path) {
  auto r = CheckpointReader::load(path);
  Agent a;
  a.actor = r.mlp("actor");
  a.q1 = r.mlp("q1");
  a.q2 = r.mlp("q2");
  a.q1_target = r.mlp("q1_target");
  a.q2_target = r.mlp("q2_target");
  a.log_temperature = r.scalar("log_temperature");
  a.bound.a_max = r.scalar("a_max");
  a.gamma = r.scalar("gamma");
  a.state_mean = r.vector("state_mean");
  a.state_std = r.vector("state_std");
  return a;
}

}  // namespace pgs
