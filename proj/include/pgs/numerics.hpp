#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>

namespace pgs {

using Vector = Eigen::VectorXd;
// Batched data is stored one sample per row.
using Matrix = Eigen::MatrixXd;

// Parameter-shaped buffer used for gradients and Adam moments.
struct MlpGrads {
  std::vector<Matrix> weights;
  std::vector<Vector> biases;

  void set_zero();
  MlpGrads& operator+=(const MlpGrads& other);
  MlpGrads& operator*=(double s);
};

// Per-layer activations recorded by a batched forward pass, consumed by backward.
struct MlpTape {
  std::vector<Matrix> layer_inputs;  // input of each affine layer
  std::vector<Matrix> pre;           // pre-activation of each affine layer
};

// Feed-forward network: ReLU on hidden layers, identity on the output layer.
// Layer k maps dims[k] -> dims[k+1] with a dims[k+1] x dims[k] weight matrix.
class Mlp {
 public:
  Mlp() = default;

  // Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
  static Mlp init(const std::vector<int>& dims, std::uint64_t seed);
  static Mlp zeros(const std::vector<int>& dims);

  const std::vector<int>& dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  int num_affine() const { return static_cast<int>(weights_.size()); }
  std::size_t parameter_count() const;

  Matrix& weight(int k) { return weights_[k]; }
  const Matrix& weight(int k) const { return weights_[k]; }
  Vector& bias(int k) { return biases_[k]; }
  const Vector& bias(int k) const { return biases_[k]; }

  Vector forward(const Vector& x) const;
  Matrix forward_batch(const Matrix& inputs, MlpTape* tape = nullptr) const;

  // Backpropagates d_out (dL/d output, one row per sample) through the recorded
  // pass. Parameter gradients are accumulated into `grads` when it is non-null.
  // Returns dL/d input.
  Matrix backward_batch(const MlpTape& tape, const Matrix& d_out,
                        MlpGrads* grads) const;

  // d output / d input for a scalar-output network. ReLU subgradient at 0 is 0.
  Vector input_gradient(const Vector& x) const;
  Matrix input_gradient_batch(const Matrix& inputs) const;

  MlpGrads zero_grads() const;

  // Polyak averaging: this <- (1 - tau) * this + tau * source.
  void soft_update_from(const Mlp& source, double tau);

  friend bool operator==(const Mlp& a, const Mlp& b);

 private:
  void check_input(Eigen::Index cols) const;

  std::vector<int> dims_;
  std::vector<Matrix> weights_;
  std::vector<Vector> biases_;
};

struct AdamConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

class AdamState {
 public:
  AdamState() = default;
  AdamState(const Mlp& net, AdamConfig cfg);

  // One bias-corrected Adam update of every parameter of `net`.
  void apply(Mlp& net, const MlpGrads& grads);

  const AdamConfig& config() const { return cfg_; }
  AdamConfig& config() { return cfg_; }
  std::int64_t step() const { return step_; }
  const MlpGrads& first_moment() const { return m_; }
  const MlpGrads& second_moment() const { return v_; }

 private:
  AdamConfig cfg_;
  MlpGrads m_;
  MlpGrads v_;
  std::int64_t step_ = 0;
};

// Adam for a single free scalar (the SAC temperature).
class ScalarAdam {
 public:
  explicit ScalarAdam(AdamConfig cfg = {}) : cfg_(cfg) {}
  void apply(double& param, double grad);
  std::int64_t step() const { return step_; }

 private:
  AdamConfig cfg_;
  double m_ = 0.0;
  double v_ = 0.0;
  std::int64_t step_ = 0;
};

// One Adam step on mean-squared error. Returns the pre-update batch MSE.
// Throws NumericFailure (without updating) when the loss is not finite.
double train_step(Mlp& net, AdamState& opt, const Matrix& inputs,
                  const Matrix& targets);

double mse(const Mlp& net, const Matrix& inputs, const Matrix& targets);

// Largest per-dimension relative error between central differences of step h
// and the analytic input gradient; denominator max(|g|, 1e-8).
double finite_diff_check(const Mlp& net, const Vector& x, double h);

}  // namespace pgs
