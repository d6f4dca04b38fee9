#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "pgs/agents.hpp"
#include "pgs/numerics.hpp"
#include "pgs/surrogate.hpp"
#include "pgs/tasks.hpp"

namespace pgs {

struct EncoderConfig {
  int latent_dim = 32;
  int window = 8;  // prediction horizons 1..window
  int hidden_width = 64;
  int hidden_layers = 2;
  int trajectories = 2000;
  int length = 50;
  int epochs = 2;  // passes over the synthesized samples
  int batch_size = 256;
  double lr = 3e-4;

  std::string canonical() const;
};

// State encoder trained to predict w-step returns z(y_{k+w}) - z(y_k) along
// random trajectories over the whole offline dataset.
struct Encoder {
  Mlp net;    // d -> latent
  Mlp heads;  // latent -> window, one linear head per horizon
  Vector input_mean, input_std;
  std::vector<double> loss_log;  // per-pass training MSE; entry 0 is before training

  int latent_dim() const { return net.output_dim(); }
  Matrix embed(const Matrix& x_raw) const;
  Vector embed(const Vector& x_raw) const;
  Matrix predict(const Matrix& x_raw) const;
};

struct EncoderSamples {
  Matrix inputs;   // raw x_k
  Matrix targets;  // horizon w in column w-1
};

// Training pairs from every position with a full window of future points.
EncoderSamples encoder_samples(const OfflineDataset& ds, int trajectories, int length, int window,
                               std::uint64_t seed);
double encoder_loss(const Encoder& enc, const EncoderSamples& samples);

Encoder train_encoder(const OfflineDataset& ds, const EncoderConfig& cfg, std::uint64_t seed);

void save_encoder(const Encoder& enc, const std::filesystem::path& path, const std::string& config_hash = "");
Encoder load_encoder(const std::filesystem::path& path);

// Latent-space nearest-neighbour regressor over the offline dataset.
class KnnIndex {
 public:
  KnnIndex(const Encoder& enc, const OfflineDataset& ds);

  // Indices of the k nearest dataset embeddings, nearest first, ties by index.
  std::vector<int> neighbors(const Vector& x_raw, int k) const;
  // Mean raw y of the k nearest neighbours.
  double estimate(const Vector& x_raw, int k) const;
  Vector estimate_batch(const Matrix& x_raw, int k) const;

  const Matrix& embeddings() const { return embeddings_; }
  int size() const { return static_cast<int>(outputs_.size()); }

 private:
  std::vector<int> neighbors_of_latent(const Vector& z, int k) const;

  const Encoder* enc_;
  Matrix embeddings_;
  Vector outputs_;
};

double knn_estimate(const Encoder& enc, const OfflineDataset& ds, const Vector& x_raw, int k);

// Mean latent-KNN estimate of the end points of N policy-guided searches.
double osel_score(const KnnIndex& index, const OfflineDataset& ds, const Surrogate& s, const Agent& agent, int N,
                  int T, int k);

struct GridSpec {
  std::vector<double> p_values{10, 20, 30, 40};
  int max_epochs = 400;
  int interval = 50;
  int k = 10;
  int k_tie = 100;
  double tie_tolerance = 1e-9;
  int num_starts = 128;
};

struct TrajectorySpec {
  int m = 2000;
  int T = 50;
  bool monotonic = false;
  double a_max = 0.05;
  double grad_eps = 1e-6;
};

struct GridCell {
  double p = 0.0;
  int epochs = 0;
  double score = 0.0;
  bool missing = false;
};

struct GridResult {
  std::vector<GridCell> cells;
  double selected_p = 0.0;
  int selected_epochs = 0;
  bool tie_break_applied = false;
  std::string tie_note;

  const GridCell* find(double p, int epochs) const;
};

// Picks the best-scoring cell. Cells within `tolerance` of the maximum are
// re-scored with `rescore` (the k_tie estimate); a remaining tie goes to the
// smaller epoch count, then the smaller p.
GridResult select_cell(std::vector<GridCell> cells, double tolerance,
                       const std::function<double(const GridCell&)>& rescore);

// For each p: build transitions, train CQL to max_epochs logging every
// interval, and score every logged agent (averaged over seeds).
GridResult hyperparameter_select(const OfflineDataset& ds, const Surrogate& s, const KnnIndex& index,
                                 const GridSpec& grid, const TrajectorySpec& traj, const CqlConfig& agent_cfg,
                                 const std::vector<std::uint64_t>& seeds);

std::string grid_csv(const GridResult& result, const std::string& config_hash = "");

double spearman(const Vector& a, const Vector& b);

}  // namespace pgs
