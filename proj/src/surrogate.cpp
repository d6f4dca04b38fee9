#include "pgs/surrogate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "pgs/checkpoint.hpp"
#include "pgs/error.hpp"

namespace pgs {

namespace {

Matrix normalize_inputs(const Matrix& x, const Vector& mean, const Vector& std) {
  return (x.rowwise() - mean.transpose()).array().rowwise() / std.transpose().array();
}

void check_dim(const Surrogate& s, Eigen::Index cols) {
  if (cols != s.dim()) {
    throw DimensionMismatch("surrogate expects dimension " + std::to_string(s.dim()) + ", got " +
                            std::to_string(cols));
  }
}

}  // namespace

Surrogate make_surrogate(Mlp net, const OfflineDataset& ds) {
  if (net.input_dim() != ds.dim() || net.output_dim() != 1) {
    throw InvalidArchitecture("surrogate network must map d -> 1");
  }
  Surrogate s;
  s.net = std::move(net);
  s.input_mean = ds.input_mean;
  s.input_std = ds.input_std;
  s.output_mean = ds.output_mean;
  s.output_std = ds.output_std;
  s.lo = ds.lo;
  s.hi = ds.hi;
  return s;
}

Surrogate train_surrogate(const OfflineDataset& ds, const SurrogateConfig& cfg, std::vector<double>* partial) {
  if (cfg.epochs < 0 || cfg.batch_size < 1 || cfg.hidden_width < 1 || cfg.hidden_layers < 0) {
    throw InvalidArgument("invalid surrogate configuration");
  }
  std::vector<int> dims{ds.dim()};
  for (int l = 0; l < cfg.hidden_layers; ++l) dims.push_back(cfg.hidden_width);
  dims.push_back(1);
  Surrogate s = make_surrogate(Mlp::init(dims, cfg.seed), ds);

  const Matrix z_in = normalize_inputs(ds.inputs, s.input_mean, s.input_std);
  const Matrix z_out = ((ds.outputs.array() - s.output_mean) / s.output_std).matrix();
  AdamState opt(s.net, AdamConfig{.lr = cfg.lr});
  std::mt19937_64 shuffle_rng(cfg.seed ^ 0x5eed5eed5eed5eedULL);
  const int n = ds.size();
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  s.epoch_mse.push_back(mse(s.net, z_in, z_out));
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    for (int start = 0; start < n; start += cfg.batch_size) {
      const int len = std::min(cfg.batch_size, n - start);
      Matrix bx(len, ds.dim());
      Matrix by(len, 1);
      for (int r = 0; r < len; ++r) {
        bx.row(r) = z_in.row(order[start + r]);
        by(r, 0) = z_out(order[start + r]);
      }
      try {
        train_step(s.net, opt, bx, by);
      } catch (const NumericFailure& e) {
        if (partial) *partial = s.epoch_mse;
        throw NumericFailure(std::string("surrogate training epoch ") + std::to_string(epoch + 1) + ": " +
                             e.what());
      }
    }
    s.epoch_mse.push_back(mse(s.net, z_in, z_out));
  }
  if (partial) *partial = s.epoch_mse;
  return s;
}

double surrogate_value(const Surrogate& s, const Vector& x_raw) {
  check_dim(s, x_raw.size());
  const Vector z = (x_raw - s.input_mean).cwiseQuotient(s.input_std);
  return s.output_mean + s.output_std * s.net.forward(z)(0);
}

Vector surrogate_values(const Surrogate& s, const Matrix& x_raw) {
  check_dim(s, x_raw.cols());
  Matrix out = s.net.forward_batch(normalize_inputs(x_raw, s.input_mean, s.input_std));
  return (s.output_mean + s.output_std * out.col(0).array()).matrix();
}

Vector surrogate_grad(const Surrogate& s, const Vector& x_raw) {
  check_dim(s, x_raw.size());
  const Vector z = (x_raw - s.input_mean).cwiseQuotient(s.input_std);
  return s.output_std * s.net.input_gradient(z).cwiseQuotient(s.input_std);
}

Matrix surrogate_grad_batch(const Surrogate& s, const Matrix& x_raw) {
  check_dim(s, x_raw.cols());
  Matrix g = s.net.input_gradient_batch(normalize_inputs(x_raw, s.input_mean, s.input_std));
  return s.output_std * (g.array().rowwise() / s.input_std.transpose().array()).matrix();
}

void save_surrogate(const Surrogate& s, const std::filesystem::path& path, const std::string& config_hash) {
  CheckpointWriter w;
  w.put_mlp("net", s.net);
  w.put_vector("input_mean", s.input_mean);
  w.put_vector("input_std", s.input_std);
  w.put_scalar("output_mean", s.output_mean);
  w.put_scalar("output_std", s.output_std);
  w.put_vector("box_lo", s.lo);
  w.put_vector("box_hi", s.hi);
  w.put_vector("epoch_mse", Eigen::Map<const Vector>(s.epoch_mse.data(), static_cast<Eigen::Index>(s.epoch_mse.size())));
  if (!config_hash.empty()) w.put_string("config_hash", config_hash);
  w.save(path);
}

Surrogate load_surrogate(const std::filesystem::path& path) {
  auto r = CheckpointReader::load(path);
  Surrogate s;
  s.net = r.mlp("net");
  s.input_mean = r.vector("input_mean");
  s.input_std = r.vector("input_std");
  s.output_mean = r.scalar("output_mean");
  s.output_std = r.scalar("output_std");
  s.lo = r.vector("box_lo");
  s.hi = r.vector("box_hi");
  const Vector& log = r.vector("epoch_mse");
  s.epoch_mse.assign(log.data(), log.data() + log.size());
  return s;
}

}  // namespace pgs
