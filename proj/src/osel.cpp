#include "pgs/osel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>

#include "pgs/checkpoint.hpp"
#include "pgs/error.hpp"
#include "pgs/search.hpp"
#include "pgs/trajectories.hpp"

namespace pgs {

std::string EncoderConfig::canonical() const {
  std::ostringstream ss;
  ss.precision(17);
  ss << "latent=" << latent_dim << ";window=" << window << ";h=" << hidden_width << "x" << hidden_layers
     << ";traj=" << trajectories << "x" << length << ";epochs=" << epochs << ";batch=" << batch_size << ";lr=" << lr;
  return ss.str();
}

namespace {

Matrix normalize(const Matrix& x, const Vector& mean, const Vector& std) {
  return (x.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
}

}  // namespace

Matrix Encoder::embed(const Matrix& x_raw) const { return net.forward_batch(normalize(x_raw, input_mean, input_std)); }

Vector Encoder::embed(const Vector& x_raw) const {
  return embed(Matrix(x_raw.transpose())).row(0).transpose();
}

Matrix Encoder::predict(const Matrix& x_raw) const { return heads.forward_batch(embed(x_raw)); }

EncoderSamples encoder_samples(const OfflineDataset& ds, int trajectories, int length, int window,
                               std::uint64_t seed) {
  if (window < 1 || length <= window) throw InvalidArgument("encoder trajectories must be longer than the window");
  std::vector<int> all(ds.size());
  std::iota(all.begin(), all.end(), 0);
  const int T = std::min(length, ds.size());
  if (T <= window) throw TooSmallDataset("dataset too small for the encoder window");
  auto trajs = synthesize_trajectories(all, trajectories, T, seed);
  const int per = T - window;
  EncoderSamples out{Matrix(static_cast<Eigen::Index>(trajectories) * per, ds.dim()),
                     Matrix(static_cast<Eigen::Index>(trajectories) * per, window)};
  Eigen::Index row = 0;
  for (const auto& t : trajs) {
    for (int k = 0; k < per; ++k, ++row) {
      out.inputs.row(row) = ds.inputs.row(t[k]);
      const double z0 = ds.z_output(ds.outputs(t[k]));
      for (int w = 1; w <= window; ++w) out.targets(row, w - 1) = ds.z_output(ds.outputs(t[k + w])) - z0;
    }
  }
  return out;
}

double encoder_loss(const Encoder& enc, const EncoderSamples& samples) {
  const Matrix pred = enc.predict(samples.inputs);
  return (pred - samples.targets).squaredNorm() / static_cast<double>(samples.targets.size());
}

Encoder train_encoder(const OfflineDataset& ds, const EncoderConfig& cfg, std::uint64_t seed) {
  if (cfg.latent_dim < 1 || cfg.epochs < 0 || cfg.batch_size < 1) throw InvalidArgument("invalid encoder config");
  std::vector<int> dims{ds.dim()};
  for (int l = 0; l < cfg.hidden_layers; ++l) dims.push_back(cfg.hidden_width);
  dims.push_back(cfg.latent_dim);
  Encoder enc;
  enc.net = Mlp::init(dims, derive_seed(seed, 31));
  // Zero heads: an all-zero target is fit exactly from the first step.
  enc.heads = Mlp::zeros({cfg.latent_dim, cfg.window});
  enc.input_mean = ds.input_mean;
  enc.input_std = ds.input_std;

  const EncoderSamples samples = encoder_samples(ds, cfg.trajectories, cfg.length, cfg.window, derive_seed(seed, 32));
  const Matrix z_in = normalize(samples.inputs, enc.input_mean, enc.input_std);
  AdamState net_opt(enc.net, AdamConfig{.lr = cfg.lr});
  AdamState head_opt(enc.heads, AdamConfig{.lr = cfg.lr});
  std::mt19937_64 rng(derive_seed(seed, 33));
  const auto n = static_cast<int>(samples.inputs.rows());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  enc.loss_log.push_back(encoder_loss(enc, samples));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int len = std::min(cfg.batch_size, n - start);
      Matrix bx(len, z_in.cols()), by(len, cfg.window);
      for (int r = 0; r < len; ++r) {
        bx.row(r) = z_in.row(order[start + r]);
        by.row(r) = samples.targets.row(order[start + r]);
      }
      MlpTape net_tape, head_tape;
      const Matrix latent = enc.net.forward_batch(bx, &net_tape);
      const Matrix pred = enc.heads.forward_batch(latent, &head_tape);
      const Matrix diff = pred - by;
      const double scale = 2.0 / static_cast<double>(diff.size());
      const double loss = diff.squaredNorm() / static_cast<double>(diff.size());
      if (!std::isfinite(loss)) throw NumericFailure("encoder training produced a non-finite loss");
      MlpGrads g_heads = enc.heads.zero_grads(), g_net = enc.net.zero_grads();
      const Matrix d_latent = enc.heads.backward_batch(head_tape, scale * diff, &g_heads);
      enc.net.backward_batch(net_tape, d_latent, &g_net);
      head_opt.apply(enc.heads, g_heads);
      net_opt.apply(enc.net, g_net);
    }
    enc.loss_log.push_back(encoder_loss(enc, samples));
  }
  return enc;
}

void save_encoder(const Encoder& enc, const std::filesystem::path& path, const std::string& config_hash) {
  CheckpointWriter w;
  w.put_mlp("net", enc.net);
  w.put_mlp("heads", enc.heads);
  w.put_vector("input_mean", enc.input_mean);
  w.put_vector("input_std", enc.input_std);
  if (!config_hash.empty()) w.put_string("config_hash", config_hash);
  w.save(path);
}

Encoder load_encoder(const std::filesystem::path& path) {
  auto r = CheckpointReader::load(path);
  Encoder enc;
  enc.net = r.mlp("net");
  enc.heads = r.mlp("heads");
  enc.input_mean = r.vector("input_mean");
  enc.input_std = r.vector("input_std");
  return enc;
}

KnnIndex::KnnIndex(const Encoder& enc, const OfflineDataset& ds)
    : enc_(&enc), embeddings_(enc.embed(ds.inputs)), outputs_(ds.outputs) {}

std::vector<int> KnnIndex::neighbors_of_latent(const Vector& z, int k) const {
  if (k < 1 || k > size()) {
    throw InvalidArgument("knn: k=" + std::to_string(k) + " outside [1, " + std::to_string(size()) + "]");
  }
  const Vector dist = (embeddings_.rowwise() - z.transpose()).rowwise().squaredNorm();
  std::vector<int> idx(static_cast<std::size_t>(size()));
  std::iota(idx.begin(), idx.end(), 0);
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(), [&](int a, int b) {
    return dist(a) < dist(b) || (dist(a) == dist(b) && a < b);
  });
  idx.resize(static_cast<std::size_t>(k));
  return idx;
}

std::vector<int> KnnIndex::neighbors(const Vector& x_raw, int k) const {
  return neighbors_of_latent(enc_->embed(x_raw), k);
}

double KnnIndex::estimate(const Vector& x_raw, int k) const {
  double sum = 0.0;
  for (int i : neighbors(x_raw, k)) sum += outputs_(i);
  return sum / k;
}

Vector KnnIndex::estimate_batch(const Matrix& x_raw, int k) const {
  const Matrix z = enc_->embed(x_raw);
  Vector out(x_raw.rows());
  for (Eigen::Index r = 0; r < z.rows(); ++r) {
    double sum = 0.0;
    for (int i : neighbors_of_latent(z.row(r).transpose(), k)) sum += outputs_(i);
    out(r) = sum / k;
  }
  return out;
}

double knn_estimate(const Encoder& enc, const OfflineDataset& ds, const Vector& x_raw, int k) {
  return KnnIndex(enc, ds).estimate(x_raw, k);
}

double osel_score(const KnnIndex& index, const OfflineDataset& ds, const Surrogate& s, const Agent& agent, int N,
                  int T, int k) {
  const Matrix starts = pick_starts(ds, N);
  const BatchSearch search = pgs_search_batch(starts, s, agent, T);
  return index.estimate_batch(search.final_states(), k).mean();
}

const GridCell* GridResult::find(double p, int epochs) const {
  for (const auto& c : cells)
    if (c.p == p && c.epochs == epochs) return &c;
  return nullptr;
}

GridResult select_cell(std::vector<GridCell> cells, double tolerance,
                       const std::function<double(const GridCell&)>& rescore) {
  GridResult r;
  r.cells = std::move(cells);
  double best = -std::numeric_limits<double>::infinity();
  for (const auto& c : r.cells)
    if (!c.missing) best = std::max(best, c.score);
  if (!std::isfinite(best)) throw InvalidArgument("hyperparameter grid has no scored cells");
  std::vector<const GridCell*> tied;
  for (const auto& c : r.cells)
    if (!c.missing && c.score >= best - tolerance) tied.push_back(&c);

  auto before = [](const GridCell* a, const GridCell* b) {
    return a->epochs < b->epochs || (a->epochs == b->epochs && a->p < b->p);
  };
  const GridCell* pick = tied.front();
  if (tied.size() > 1) {
    r.tie_break_applied = true;
    std::vector<double> second;
    for (const auto* c : tied) second.push_back(rescore(*c));
    const double best2 = *std::max_element(second.begin(), second.end());
    pick = nullptr;
    for (std::size_t i = 0; i < tied.size(); ++i) {
      if (second[i] >= best2 - tolerance && (!pick || before(tied[i], pick))) pick = tied[i];
    }
    std::ostringstream note;
    note << tied.size() << " cells tied within " << tolerance << "; re-scored with the tie-break k";
    r.tie_note = note.str();
  }
  r.selected_p = pick->p;
  r.selected_epochs = pick->epochs;
  return r;
}

GridResult hyperparameter_select(const OfflineDataset& ds, const Surrogate& s, const KnnIndex& index,
                                 const GridSpec& grid, const TrajectorySpec& traj, const CqlConfig& agent_cfg,
                                 const std::vector<std::uint64_t>& seeds) {
  if (grid.p_values.empty() || seeds.empty()) throw InvalidArgument("empty hyperparameter grid");
  if (grid.interval < 1 || grid.max_epochs < grid.interval) throw InvalidArgument("bad grid epoch range");
  CqlConfig cfg = agent_cfg;
  cfg.epochs = grid.max_epochs;
  cfg.checkpoint_interval = grid.interval;

  std::vector<GridCell> cells;
  std::map<std::pair<double, int>, std::vector<Agent>> agents;
  for (double p : grid.p_values) {
    std::vector<int> top;
    bool feasible = true;
    try {
      top = select_top_p(ds, p);
      feasible = static_cast<int>(top.size()) >= traj.T;
    } catch (const TooSmallDataset&) {
      feasible = false;
    }
    std::map<int, double> sums;
    if (feasible) {
      for (std::uint64_t seed : seeds) {
        auto trajs = synthesize_trajectories(top, traj.m, traj.T, derive_seed(seed, 20), &ds, traj.monotonic);
        TransitionSet set = build_transition_set(trajs, s, ds, ActionBound{traj.a_max}, traj.grad_eps);
        TrainResult tr = cql_train(set, cfg, derive_seed(seed, 21));
        for (const auto& ck : tr.checkpoints) {
          sums[ck.epoch] += osel_score(index, ds, s, ck.agent, grid.num_starts, traj.T, grid.k);
          agents[{p, ck.epoch}].push_back(ck.agent);
        }
      }
    }
    for (int e = grid.interval; e <= grid.max_epochs; e += grid.interval) {
      GridCell c{p, e, 0.0, true};
      auto it = sums.find(e);
      if (it != sums.end() && agents[{p, e}].size() == seeds.size()) {
        c.score = it->second / static_cast<double>(seeds.size());
        c.missing = false;
      }
      cells.push_back(c);
    }
  }
  const int k_tie = std::min(grid.k_tie, index.size());
  return select_cell(std::move(cells), grid.tie_tolerance, [&](const GridCell& c) {
    double sum = 0.0;
    const auto& list = agents.at({c.p, c.epochs});
    for (const auto& a : list) sum += osel_score(index, ds, s, a, grid.num_starts, traj.T, k_tie);
    return sum / static_cast<double>(list.size());
  });
}

std::string grid_csv(const GridResult& result, const std::string& config_hash) {
  std::string out;
  if (!config_hash.empty()) out += "# config_hash=" + config_hash + "\n";
  out += "p,epochs,osel_score,selected\n";
  char buf[64];
  for (const auto& c : result.cells) {
    std::snprintf(buf, sizeof buf, "%g", c.p);
    out += std::string(buf) + "," + std::to_string(c.epochs) + ",";
    if (c.missing) {
      out += "NA";
    } else {
      std::snprintf(buf, sizeof buf, "%.10g", c.score);
      out += buf;
    }
    const bool sel = c.p == result.selected_p && c.epochs == result.selected_epochs;
    out += sel ? ",true\n" : ",false\n";
  }
  return out;
}

namespace {

Vector ranks(const Vector& v) {
  const auto n = v.size();
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return v(a) < v(b); });
  Vector r(n);
  for (Eigen::Index i = 0; i < n;) {
    Eigen::Index j = i;
    while (j + 1 < n && v(idx[j + 1]) == v(idx[i])) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (Eigen::Index t = i; t <= j; ++t) r(idx[t]) = avg;
    i = j + 1;
  }
  return r;
}

}  // namespace

double spearman(const Vector& a, const Vector& b) {
  if (a.size() != b.size() || a.size() < 2) throw InvalidArgument("spearman: need two equal-length samples");
  const Vector ra = ranks(a), rb = ranks(b);
  const Vector ca = ra.array() - ra.mean(), cb = rb.array() - rb.mean();
  const double denom = std::sqrt(ca.squaredNorm() * cb.squaredNorm());
  return denom > 0 ? ca.dot(cb) / denom : 0.0;
}

}  // namespace pgs
