#include "pgs/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "pgs/error.hpp"

namespace pgs {

void MlpGrads::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : biases) b.setZero();
}

MlpGrads& MlpGrads::operator+=(const MlpGrads& other) {
  for (std::size_t k = 0; k < weights.size(); ++k) {
    weights[k] += other.weights[k];
    biases[k] += other.biases[k];
  }
  return *this;
}

MlpGrads& MlpGrads::operator*=(double s) {
  for (auto& w : weights) w *= s;
  for (auto& b : biases) b *= s;
  return *this;
}

namespace {

void validate_dims(const std::vector<int>& dims) {
  if (dims.size() < 2) {
    throw InvalidArchitecture("an mlp needs at least an input and an output layer, got " +
                              std::to_string(dims.size()) + " layer(s)");
  }
  for (int d : dims) {
    if (d < 1) throw InvalidArchitecture("layer widths must be positive");
  }
}

}  // namespace

Mlp Mlp::zeros(const std::vector<int>& dims) {
  validate_dims(dims);
  Mlp m;
  m.dims_ = dims;
  for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
    m.weights_.push_back(Matrix::Zero(dims[k + 1], dims[k]));
    m.biases_.push_back(Vector::Zero(dims[k + 1]));
  }
  return m;
}

Mlp Mlp::init(const std::vector<int>& dims, std::uint64_t seed) {
  Mlp m = zeros(dims);
  std::mt19937_64 rng(seed);
  for (int k = 0; k < m.num_affine(); ++k) {
    const double bound = std::sqrt(6.0 / (dims[k] + dims[k + 1]));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix& w = m.weights_[k];
    // Row-major fill so the draw order matches the checkpoint layout.
    for (Eigen::Index r = 0; r < w.rows(); ++r)
      for (Eigen::Index c = 0; c < w.cols(); ++c) w(r, c) = dist(rng);
  }
  return m;
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (int k = 0; k < num_affine(); ++k)
    n += static_cast<std::size_t>(weights_[k].size() + biases_[k].size());
  return n;
}

void Mlp::check_input(Eigen::Index cols) const {
  if (dims_.empty()) throw InvalidArchitecture("network is uninitialised");
  if (cols != dims_.front()) {
    throw DimensionMismatch("mlp expects input of length " + std::to_string(dims_.front()) +
                            ", got " + std::to_string(cols));
  }
}

Vector Mlp::forward(const Vector& x) const {
  check_input(x.size());
  Vector h = x;
  for (int k = 0; k < num_affine(); ++k) {
    Vector z = weights_[k] * h + biases_[k];
    if (k + 1 < num_affine()) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

Matrix Mlp::forward_batch(const Matrix& inputs, MlpTape* tape) const {
  check_input(inputs.cols());
  if (tape) {
    tape->layer_inputs.resize(num_affine());
    tape->pre.resize(num_affine());
  }
  Matrix h = inputs;
  for (int k = 0; k < num_affine(); ++k) {
    Matrix z = h * weights_[k].transpose();
    z.rowwise() += biases_[k].transpose();
    if (tape) {
      tape->layer_inputs[k] = std::move(h);
      tape->pre[k] = z;
    }
    if (k + 1 < num_affine()) z = z.cwiseMax(0.0);
    h = std::move(z);
  }
  return h;
}

Matrix Mlp::backward_batch(const MlpTape& tape, const Matrix& d_out, MlpGrads* grads) const {
  Matrix delta = d_out;
  for (int k = num_affine() - 1; k >= 0; --k) {
    if (k + 1 < num_affine()) {
      delta = (tape.pre[k].array() > 0.0).select(delta, 0.0);
    }
    if (grads) {
      grads->weights[k].noalias() += delta.transpose() * tape.layer_inputs[k];
      grads->biases[k] += delta.colwise().sum().transpose();
    }
    delta = delta * weights_[k];
  }
  return delta;
}

Vector Mlp::input_gradient(const Vector& x) const {
  check_input(x.size());
  if (dims_.back() != 1) {
    throw InvalidArchitecture("input gradient requires a scalar-output network");
  }
  MlpTape tape;
  Matrix row = x.transpose();
  forward_batch(row, &tape);
  Matrix g = backward_batch(tape, Matrix::Ones(1, 1), nullptr);
  return g.row(0).transpose();
}

Matrix Mlp::input_gradient_batch(const Matrix& inputs) const {
  check_input(inputs.cols());
  if (dims_.back() != 1) {
    throw InvalidArchitecture("input gradient requires a scalar-output network");
  }
  MlpTape tape;
  forward_batch(inputs, &tape);
  return backward_batch(tape, Matrix::Ones(inputs.rows(), 1), nullptr);
}

MlpGrads Mlp::zero_grads() const {
  MlpGrads g;
  for (int k = 0; k < num_affine(); ++k) {
    g.weights.push_back(Matrix::Zero(weights_[k].rows(), weights_[k].cols()));
    g.biases.push_back(Vector::Zero(biases_[k].size()));
  }
  return g;
}

void Mlp::soft_update_from(const Mlp& source, double tau) {
  for (int k = 0; k < num_affine(); ++k) {
    weights_[k] = (1.0 - tau) * weights_[k] + tau * source.weights_[k];
    biases_[k] = (1.0 - tau) * biases_[k] + tau * source.biases_[k];
  }
}

bool operator==(const Mlp& a, const Mlp& b) {
  if (a.dims_ != b.dims_) return false;
  for (int k = 0; k < a.num_affine(); ++k) {
    if (a.weights_[k] != b.weights_[k] || a.biases_[k] != b.biases_[k]) return false;
  }
  return true;
}

AdamState::AdamState(const Mlp& net, AdamConfig cfg)
    : cfg_(cfg), m_(net.zero_grads()), v_(net.zero_grads()) {}

void AdamState::apply(Mlp& net, const MlpGrads& grads) {
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(cfg_.beta1, t);
  const double c2 = 1.0 - std::pow(cfg_.beta2, t);
  auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
    m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
    param.array() -= cfg_.lr * (m.array() / c1) / ((v.array() / c2).sqrt() + cfg_.eps);
  };
  for (int k = 0; k < net.num_affine(); ++k) {
    update(net.weight(k), grads.weights[k], m_.weights[k], v_.weights[k]);
    update(net.bias(k), grads.biases[k], m_.biases[k], v_.biases[k]);
  }
}

void ScalarAdam::apply(double& param, double grad) {
  ++step_;
  const double t = static_cast<double>(step_);
  m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
  v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad * grad;
  const double mhat = m_ / (1.0 - std::pow(cfg_.beta1, t));
  const double vhat = v_ / (1.0 - std::pow(cfg_.beta2, t));
  param -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
}

double mse(const Mlp& net, const Matrix& inputs, const Matrix& targets) {
  Matrix pred = net.forward_batch(inputs);
  return (pred - targets).squaredNorm() / static_cast<double>(targets.size());
}

double train_step(Mlp& net, AdamState& opt, const Matrix& inputs, const Matrix& targets) {
  if (inputs.rows() == 0) throw InvalidArgument("train_step: empty batch");
  if (targets.rows() != inputs.rows() || targets.cols() != net.output_dim()) {
    throw DimensionMismatch("train_step: targets shape does not match batch/network");
  }
  MlpTape tape;
  Matrix pred = net.forward_batch(inputs, &tape);
  Matrix diff = pred - targets;
  const double n = static_cast<double>(diff.size());
  const double loss = diff.squaredNorm() / n;
  if (!std::isfinite(loss)) throw NumericFailure("train_step: non-finite loss");
  MlpGrads grads = net.zero_grads();
  net.backward_batch(tape, (2.0 / n) * diff, &grads);
  opt.apply(net, grads);
  return loss;
}

double finite_diff_check(const Mlp& net, const Vector& x, double h) {
  if (!(h > 0.0)) throw InvalidArgument("finite_diff_check: h must be positive");
  const Vector g = net.input_gradient(x);
  double worst = 0.0;
  Vector probe = x;
  for (Eigen::Index j = 0; j < x.size(); ++j) {
    probe(j) = x(j) + h;
    const double up = net.forward(probe)(0);
    probe(j) = x(j) - h;
    const double down = net.forward(probe)(0);
    probe(j) = x(j);
    const double fd = (up - down) / (2.0 * h);
    const double rel = std::abs(fd - g(j)) / std::max(std::abs(g(j)), 1e-8);
    worst = std::max(worst, rel);
  }
  return worst;
}

}  // namespace pgs
