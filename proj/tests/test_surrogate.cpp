#include <cmath>
#include <filesystem>
#include <random>

#include "doctest.h"
#include "pgs/error.hpp"
#include "pgs/surrogate.hpp"
#include "test_util.hpp"

using namespace pgs;
using pgs_test::random_vector;

TEST_CASE("zero network surrogate") {
  const OfflineDataset ds = pgs_test::linear_dataset(Vector::Ones(3), 50, 1);
  const Surrogate s = make_surrogate(Mlp::zeros({3, 8, 1}), ds);
  CHECK(surrogate_value(s, ds.input_mean) == doctest::Approx(ds.output_mean).epsilon(1e-15));
  CHECK(surrogate_grad(s, Vector::Ones(3)).isZero());
  CHECK_THROWS_AS(surrogate_value(s, Vector::Zero(2)), DimensionMismatch);
}

TEST_CASE("constant target is fit") {
  std::mt19937_64 rng(3);
  Matrix x(64, 2);
  for (int i = 0; i < 64; ++i) x.row(i) = random_vector(2, rng).transpose();
  const OfflineDataset ds =
      make_dataset("c", x, Vector::Constant(64, 2.5), Vector::Constant(2, -1), Vector::Constant(2, 1), 0, 5);
  SurrogateConfig cfg;
  cfg.hidden_width = 16;
  cfg.epochs = 300;
  cfg.batch_size = 64;
  cfg.lr = 1e-2;
  const Surrogate s = train_surrogate(ds, cfg);
  CHECK(s.epoch_mse.back() < 1e-4);
  CHECK(s.epoch_mse.back() < 1e-3 * s.epoch_mse.front());
  CHECK(std::abs(surrogate_value(s, x.row(0).transpose()) - 2.5) < 1e-2);
}

TEST_CASE("linear target y = 3x") {
  const OfflineDataset ds = pgs_test::linear_dataset(Vector::Constant(1, 3.0), 100, 7);
  SurrogateConfig cfg;
  cfg.hidden_width = 32;
  cfg.hidden_layers = 1;
  cfg.epochs = 200;
  cfg.batch_size = 16;
  cfg.lr = 3e-3;
  const Surrogate s = train_surrogate(ds, cfg);
  REQUIRE(s.epoch_mse.size() == 201);
  CHECK(s.epoch_mse.back() < 1e-3);
  CHECK(s.epoch_mse.back() <= s.epoch_mse.front());
  CHECK(surrogate_grad(s, Vector::Constant(1, 0.3))(0) == doctest::Approx(3.0).epsilon(0.05));
}

TEST_CASE("raw-space gradient matches differences of the value") {
  const OfflineDataset ds = pgs_test::linear_dataset(Vector::LinSpaced(4, -1.0, 2.0), 200, 9);
  SurrogateConfig cfg;
  cfg.hidden_width = 24;
  cfg.epochs = 3;
  Surrogate s = train_surrogate(ds, cfg);
  std::mt19937_64 rng(4);
  int checked = 0;
  for (int t = 0; t < 50; ++t) {
    const Vector x = random_vector(4, rng);
    const Vector zx = (x - s.input_mean).cwiseQuotient(s.input_std);
    if (pgs_test::near_kink(s.net, zx, 1e-3)) continue;
    const Vector g = surrogate_grad(s, x);
    for (int j = 0; j < 4; ++j) {
      const double h = 1e-4 * s.input_std(j);
      Vector xp = x, xm = x;
      xp(j) += h;
      xm(j) -= h;
      const double fd = (surrogate_value(s, xp) - surrogate_value(s, xm)) / (2 * h);
      CHECK(std::abs(fd - g(j)) <= 1e-4 * std::max(std::abs(g(j)), 1e-8));
    }
    ++checked;
  }
  CHECK(checked > 30);
  const Matrix gb = surrogate_grad_batch(s, ds.inputs.topRows(5));
  for (int i = 0; i < 5; ++i) CHECK((gb.row(i).transpose() - surrogate_grad(s, ds.input(i))).norm() < 1e-12);
}

TEST_CASE("training is deterministic and checkpoints round trip") {
  const OfflineDataset ds = pgs_test::linear_dataset(Vector::Ones(2), 80, 2);
  SurrogateConfig cfg;
  cfg.hidden_width = 8;
  cfg.epochs = 4;
  cfg.seed = 5;
  const Surrogate a = train_surrogate(ds, cfg), b = train_surrogate(ds, cfg);
  CHECK(a.net == b.net);
  CHECK(a.epoch_mse == b.epoch_mse);
  const auto path = std::filesystem::temp_directory_path() / "pgs_test_surrogate.ckpt";
  save_surrogate(a, path);
  const Surrogate c = load_surrogate(path);
  CHECK(c.net == a.net);
  CHECK(c.input_std == a.input_std);
  CHECK(c.output_mean == a.output_mean);
  CHECK(c.epoch_mse == a.epoch_mse);
  std::filesystem::remove(path);
}

TEST_CASE("rescaled inputs give the same normalised network") {
  const OfflineDataset ds = pgs_test::linear_dataset(Vector::Constant(2, 1.5), 60, 8);
  Matrix scaled = ds.inputs * 4.0;
  scaled.array() += 2.0;
  const OfflineDataset ds2 = make_dataset("s", scaled, ds.outputs, Vector::Constant(2, -2), Vector::Constant(2, 6),
                                          ds.pool_min, ds.pool_max);
  SurrogateConfig cfg;
  cfg.hidden_width = 8;
  cfg.epochs = 3;
  const Surrogate a = train_surrogate(ds, cfg), b = train_surrogate(ds2, cfg);
  for (int k = 0; k < a.net.num_affine(); ++k) CHECK((a.net.weight(k) - b.net.weight(k)).norm() < 1e-9);
}
