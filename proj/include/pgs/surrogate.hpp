#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pgs/numerics.hpp"
#include "pgs/tasks.hpp"

namespace pgs {

struct SurrogateConfig {
  int hidden_width = 256;  // 2048 reproduces the full-scale network
  int hidden_layers = 2;
  int epochs = 50;
  int batch_size = 128;
  double lr = 3e-4;
  std::uint64_t seed = 0;
};

// Regression model of the objective trained on z-scored inputs and outputs.
struct Surrogate {
  Mlp net;
  Vector input_mean, input_std;
  double output_mean = 0.0;
  double output_std = 1.0;
  Vector lo, hi;
  std::vector<double> epoch_mse;  // full training-set MSE (normalised units); entry 0 is before training

  int dim() const { return net.input_dim(); }
};

// Trains with shuffled mini-batches for cfg.epochs. On numeric failure throws
// NumericFailure; `partial` (when given) receives the log collected so far.
Surrogate train_surrogate(const OfflineDataset& ds, const SurrogateConfig& cfg,
                          std::vector<double>* partial = nullptr);

// Wraps an existing normalised-space network with the dataset statistics.
Surrogate make_surrogate(Mlp net, const OfflineDataset& ds);

double surrogate_value(const Surrogate& s, const Vector& x_raw);
Vector surrogate_values(const Surrogate& s, const Matrix& x_raw);

// Raw-coordinate gradient: (out_std / in_std_j) * d net / d z_j.
Vector surrogate_grad(const Surrogate& s, const Vector& x_raw);
Matrix surrogate_grad_batch(const Surrogate& s, const Matrix& x_raw);

void save_surrogate(const Surrogate& s, const std::filesystem::path& path, const std::string& config_hash = "");
Surrogate load_surrogate(const std::filesystem::path& path);

}  // namespace pgs
