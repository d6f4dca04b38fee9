#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "pgs/checkpoint.hpp"
#include "pgs/error.hpp"
#include "pgs/numerics.hpp"
#include "test_util.hpp"

using namespace pgs;
using pgs_test::near_kink;
using pgs_test::random_vector;

namespace {

Mlp one_one_one(double a, double b) {
  Mlp net = Mlp::zeros({1, 1, 1});
  net.weight(0)(0, 0) = a;
  net.weight(1)(0, 0) = b;
  return net;
}

}  // namespace

TEST_CASE("init is deterministic and validates dims") {
  CHECK(Mlp::init({2, 3, 1}, 7) == Mlp::init({2, 3, 1}, 7));
  CHECK_FALSE(Mlp::init({2, 3, 1}, 7) == Mlp::init({2, 3, 1}, 8));
  CHECK_THROWS_AS(Mlp::init({2}, 7), InvalidArchitecture);
  CHECK_THROWS_AS(Mlp::init({}, 7), InvalidArchitecture);
  CHECK_THROWS_AS(Mlp::init({2, 0, 1}, 7), InvalidArchitecture);
}

TEST_CASE("init shapes and glorot bound") {
  Mlp net = Mlp::init({4, 16, 3}, 1);
  REQUIRE(net.num_affine() == 2);
  CHECK(net.weight(0).rows() == 16);
  CHECK(net.weight(0).cols() == 4);
  CHECK(net.weight(1).rows() == 3);
  CHECK(net.parameter_count() == 4 * 16 + 16 + 16 * 3 + 3);
  const double b0 = std::sqrt(6.0 / 20.0);
  CHECK(net.weight(0).cwiseAbs().maxCoeff() <= b0);
  CHECK(net.bias(0).isZero());
}

TEST_CASE("hand-evaluated forward passes") {
  Mlp net = one_one_one(1.0, 1.0);
  CHECK(net.forward(Vector::Constant(1, 2.0))(0) == 2.0);
  CHECK(net.forward(Vector::Constant(1, -2.0))(0) == 0.0);
  Mlp z = Mlp::zeros({3, 5, 2});
  CHECK(z.forward(Vector::Constant(3, 4.0)).isZero());
  CHECK_THROWS_AS(z.forward(Vector::Zero(2)), DimensionMismatch);
}

TEST_CASE("input gradient by hand") {
  CHECK(Mlp::zeros({3, 4, 1}).input_gradient(Vector::Ones(3)).isZero());
  const double a = 1.5, b = -0.7;
  CHECK(one_one_one(a, b).input_gradient(Vector::Constant(1, 0.8))(0) == doctest::Approx(a * b).epsilon(1e-15));
  // kink convention: pre-activation exactly 0 has subgradient 0
  CHECK(one_one_one(a, b).input_gradient(Vector::Zero(1))(0) == 0.0);
  CHECK_THROWS_AS(Mlp::zeros({2, 2}).input_gradient(Vector::Zero(2)), InvalidArchitecture);
}

TEST_CASE("batched and single forward agree") {
  Mlp net = Mlp::init({3, 8, 8, 2}, 3);
  std::mt19937_64 rng(5);
  Matrix x(6, 3);
  for (int i = 0; i < 6; ++i) x.row(i) = random_vector(3, rng).transpose();
  Matrix out = net.forward_batch(x);
  for (int i = 0; i < 6; ++i) CHECK((out.row(i).transpose() - net.forward(x.row(i).transpose())).norm() < 1e-14);
}

TEST_CASE("input gradients match central differences away from kinks") {
  std::mt19937_64 rng(11);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    const int d = 1 + trial % 6;
    Mlp net = Mlp::init({d, 12, 12, 1}, 100 + trial);
    for (int k = 0; k < net.num_affine(); ++k) net.bias(k) = random_vector(net.bias(k).size(), rng, -0.3, 0.3);
    Vector x = random_vector(d, rng, -2.0, 2.0);
    if (near_kink(net, x, 1e-3)) continue;
    CHECK(finite_diff_check(net, x, 1e-5) < 1e-4);
    ++checked;
  }
  CHECK(checked > 40);
}

TEST_CASE("finite_diff_check on exact cases") {
  CHECK(finite_diff_check(Mlp::zeros({3, 4, 1}), Vector::Ones(3), 1e-4) == 0.0);
  Mlp linear = Mlp::init({4, 1}, 2);
  std::mt19937_64 rng(1);
  CHECK(finite_diff_check(linear, random_vector(4, rng), 1e-3) < 1e-8);
}

TEST_CASE("parameter gradients match differences of the loss") {
  std::mt19937_64 rng(21);
  Mlp net = Mlp::init({3, 6, 5, 2}, 4);
  for (int k = 0; k < net.num_affine(); ++k) net.bias(k) = random_vector(net.bias(k).size(), rng, -0.2, 0.2);
  Matrix x(8, 3), y(8, 2);
  for (int i = 0; i < 8; ++i) {
    x.row(i) = random_vector(3, rng).transpose();
    y.row(i) = random_vector(2, rng).transpose();
  }
  MlpTape tape;
  Matrix out = net.forward_batch(x, &tape);
  MlpGrads g = net.zero_grads();
  net.backward_batch(tape, 2.0 / static_cast<double>(out.size()) * (out - y), &g);
  const double h = 1e-6;
  for (int k = 0; k < net.num_affine(); ++k) {
    for (Eigen::Index r = 0; r < net.weight(k).rows(); ++r) {
      for (Eigen::Index c = 0; c < net.weight(k).cols(); ++c) {
        Mlp plus = net, minus = net;
        plus.weight(k)(r, c) += h;
        minus.weight(k)(r, c) -= h;
        const double fd = (mse(plus, x, y) - mse(minus, x, y)) / (2 * h);
        const double an = g.weights[k](r, c);
        CHECK(std::abs(fd - an) <= 1e-4 * std::max(std::abs(an), 1e-3));
      }
      Mlp plus = net, minus = net;
      plus.bias(k)(r) += h;
      minus.bias(k)(r) -= h;
      const double fd = (mse(plus, x, y) - mse(minus, x, y)) / (2 * h);
      CHECK(std::abs(fd - g.biases[k](r)) <= 1e-4 * std::max(std::abs(g.biases[k](r)), 1e-3));
    }
  }
}

TEST_CASE("adam single step on y = w x") {
  // data (1, 2), w = 0, no bias term used: dL/dw = 2 (0 - 2) = -4
  Mlp net = Mlp::zeros({1, 1});
  AdamState opt(net, AdamConfig{.lr = 0.1});
  CHECK(opt.step() == 0);
  CHECK(opt.first_moment().weights[0].isZero());
  const double loss = train_step(net, opt, Matrix::Constant(1, 1, 1.0), Matrix::Constant(1, 1, 2.0));
  CHECK(loss == 4.0);
  CHECK(opt.step() == 1);
  const double g = -4.0;
  const double m = (1 - 0.9) * g, v = (1 - 0.999) * g * g;
  const double mhat = m / (1 - 0.9), vhat = v / (1 - 0.999);
  const double expected = 0.0 - 0.1 * mhat / (std::sqrt(vhat) + 1e-8);
  CHECK(net.weight(0)(0, 0) > 0.0);
  CHECK(net.weight(0)(0, 0) == doctest::Approx(expected).epsilon(1e-15));
  CHECK(net.weight(0)(0, 0) == doctest::Approx(0.1 * 4.0 / (4.0 + 1e-8)).epsilon(1e-15));
}

TEST_CASE("train_step edge cases") {
  Mlp net = Mlp::init({2, 4, 1}, 9);
  Matrix x(3, 2);
  x << 0.1, 0.2, -0.3, 0.4, 0.5, -0.6;
  Matrix exact = net.forward_batch(x);
  AdamState opt(net, AdamConfig{});
  CHECK(train_step(net, opt, x, exact) == 0.0);

  Mlp frozen = Mlp::init({2, 4, 1}, 9);
  AdamState zero_lr(frozen, AdamConfig{.lr = 0.0});
  train_step(frozen, zero_lr, x.topRows(1), Matrix::Constant(1, 1, 3.0));
  CHECK(frozen == Mlp::init({2, 4, 1}, 9));

  CHECK_THROWS_AS(train_step(net, opt, Matrix(0, 2), Matrix(0, 1)), InvalidArgument);
  Mlp before = net;
  Matrix bad = Matrix::Constant(1, 1, std::numeric_limits<double>::quiet_NaN());
  CHECK_THROWS_AS(train_step(net, opt, x.topRows(1), bad), NumericFailure);
  CHECK(net == before);
}

TEST_CASE("training is deterministic") {
  auto run = [] {
    Mlp net = Mlp::init({2, 8, 1}, 3);
    AdamState opt(net, AdamConfig{});
    Matrix x(4, 2);
    x << 1, 0, 0, 1, -1, 0.5, 0.2, -0.2;
    Matrix y(4, 1);
    y << 1, -1, 0.3, 0.1;
    for (int i = 0; i < 25; ++i) train_step(net, opt, x, y);
    return net;
  };
  CHECK(run() == run());
}

TEST_CASE("soft update is a convex combination") {
  Mlp a = Mlp::init({2, 3, 1}, 1), b = Mlp::init({2, 3, 1}, 2);
  Mlp t = a;
  t.soft_update_from(b, 0.25);
  CHECK((t.weight(0) - (0.75 * a.weight(0) + 0.25 * b.weight(0))).norm() < 1e-15);
}

TEST_CASE("checkpoint round trip is bit exact") {
  Mlp net = Mlp::init({3, 7, 2}, 42);
  net.bias(0)(1) = 1.0 / 3.0;
  CheckpointWriter w;
  w.put_mlp("net", net);
  w.put_vector("v", Vector::LinSpaced(4, -1.0 / 7.0, 2.0));
  w.put_scalar("s", std::numeric_limits<double>::denorm_min());
  w.put_string("note", "hello world");
  auto r = CheckpointReader::parse(w.str());
  CHECK(r.mlp("net") == net);
  CHECK(r.vector("v") == Vector::LinSpaced(4, -1.0 / 7.0, 2.0));
  CHECK(r.scalar("s") == std::numeric_limits<double>::denorm_min());
  CHECK(r.text("note") == "hello world");
  CHECK_FALSE(r.has("missing"));
  CHECK_THROWS_AS(CheckpointReader::parse("not-a-checkpoint\n"), FormatError);
  CHECK_THROWS_AS(CheckpointReader::parse("pgs-checkpoint 1\nscalar x 1.0\n"), FormatError);
}

TEST_CASE("content hash is stable") {
  CHECK(content_hash("") == "cbf29ce484222325");
  CHECK(content_hash("a") == "af63dc4c8601ec8c");
  CHECK(content_hash("abc") != content_hash("abd"));
}
