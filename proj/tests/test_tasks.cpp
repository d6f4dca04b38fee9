#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>

#include "doctest.h"
#include "pgs/checkpoint.hpp"
#include "pgs/error.hpp"
#include "pgs/tasks.hpp"

using namespace pgs;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  int i = 0;
  for (double x : xs) v(i++) = x;
  return v;
}

}  // namespace

TEST_CASE("oracle values") {
  CHECK(oracle_eval(make_task("quadratic-bowl"), Vector::Zero(5)) == 0.0);
  CHECK(oracle_eval(make_task("neg-ackley"), Vector::Zero(10)) == doctest::Approx(0.0).epsilon(1e-12));
  Vector e1 = Vector::Zero(10);
  e1(0) = 1.0;
  CHECK(oracle_eval(make_task("neg-rastrigin"), e1) == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(oracle_eval(make_task("neg-rosenbrock"), Vector::Ones(8)) == 0.0);

  // reference values from an independent numpy evaluation
  const Vector x = vec({0.5, -1.0, 2.0, 0.0, 1.5, -0.25, 3.0, -4.0, 0.1, 1.0});
  CHECK(oracle_eval(make_task("neg-ackley"), x) == doctest::Approx(-7.23701683644471).epsilon(1e-13));
  CHECK(oracle_eval(make_task("neg-rastrigin"), x) == doctest::Approx(-85.48233005625053).epsilon(1e-13));
  const Vector r = vec({0.5, -1.0, 1.2, 0.0, 0.3, -0.25, 1.1, -0.4});
  CHECK(oracle_eval(make_task("neg-rosenbrock"), r) == doctest::Approx(-762.3731250000001).epsilon(1e-13));
}

TEST_CASE("oracle errors and clamping") {
  const Task t = make_task("quadratic-bowl");
  CHECK_THROWS_AS(oracle_eval(t, Vector::Zero(4)), DimensionMismatch);
  Vector nan = Vector::Zero(5);
  nan(2) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(oracle_eval(t, nan), InvalidArgument);
  bool clamped = false;
  CHECK(oracle_eval(t, Vector::Constant(5, 3.0), &clamped) == -5.0);
  CHECK(clamped);
  CHECK_THROWS_AS(make_task("sphere"), InvalidArgument);
}

TEST_CASE("offline dataset generation") {
  const Task t = make_task("neg-ackley");
  const OfflineDataset full = generate_offline_dataset(t, 200, 100.0, 1);
  CHECK(full.size() == 200);
  const OfflineDataset ds = generate_offline_dataset(t, 1000, 40.0, 3);
  CHECK(ds.size() == 400);
  CHECK(ds.dim() == 10);
  CHECK(ds.pool_min <= ds.outputs.minCoeff());
  CHECK(ds.pool_max >= ds.outputs.maxCoeff());
  CHECK((ds.inputs.array() >= -5.0).all());
  CHECK((ds.inputs.array() <= 5.0).all());
  CHECK((ds.input_std.array() > 0.0).all());

  const OfflineDataset again = generate_offline_dataset(t, 1000, 40.0, 3);
  CHECK(again.inputs == ds.inputs);
  CHECK(again.outputs == ds.outputs);

  CHECK_THROWS_AS(generate_offline_dataset(t, 100, 10.0, 0), TooSmallDataset);
  CHECK_THROWS_AS(generate_offline_dataset(t, 99, 50.0, 0), InvalidArgument);
  CHECK_THROWS_AS(generate_offline_dataset(t, 1000, 0.0, 0), InvalidArgument);
}

TEST_CASE("truncation property against the pool") {
  const Task t = make_task("neg-rastrigin");
  for (double keep : {10.0, 25.0, 40.0, 73.0}) {
    const Pool pool = sample_pool(t, 1000, 5);
    const OfflineDataset ds = generate_offline_dataset(t, 1000, keep, 5);
    std::vector<double> ys(pool.outputs.data(), pool.outputs.data() + pool.outputs.size());
    std::sort(ys.begin(), ys.end());
    const int kept = static_cast<int>(std::ceil(1000 * keep / 100.0 - 1e-9));
    CHECK(ds.size() == kept);
    CHECK(ds.outputs.maxCoeff() <= ys[kept - 1]);
    CHECK(ds.pool_min == ys.front());
    CHECK(ds.pool_max == ys.back());
    CHECK(d_best(ds).normalized < 1.0);
  }
}

TEST_CASE("normalisation and d_best") {
  Matrix x(3, 1);
  x << 0.1, 0.2, 0.3;
  const OfflineDataset ds = make_dataset("t", x, Vector::LinSpaced(3, 1.0, 3.0), Vector::Constant(1, -1),
                                         Vector::Constant(1, 1), 0.0, 10.0);
  CHECK(d_best(ds).raw == 3.0);
  CHECK(d_best(ds).normalized == doctest::Approx(0.3));
  CHECK(normalize_score(0.0, ds) == 0.0);
  CHECK(normalize_score(10.0, ds) == 1.0);
  CHECK(normalize_score(4.0, ds) < normalize_score(4.0 + 1e-9, ds));

  Matrix x2(2, 1);
  x2 << 0.0, 1.0;
  Vector y2(2);
  y2 << 0.0, 5.0;
  CHECK(d_best(make_dataset("t", x2, y2, Vector::Constant(1, -1), Vector::Constant(1, 1), 0.0, 6.0)).raw == 5.0);
  CHECK_THROWS_AS(make_dataset("t", x2.topRows(1), y2.head(1), Vector::Constant(1, -1), Vector::Constant(1, 1),
                               0.0, 1.0),
                  TooSmallDataset);
  const OfflineDataset flat =
      make_dataset("t", x2, Vector::Constant(2, 1.0), Vector::Constant(1, -1), Vector::Constant(1, 1), 0.0, 1.0);
  CHECK(flat.output_std == 1.0);
  CHECK_THROWS_AS(normalize_score(0.0, make_dataset("t", x2, y2, Vector::Constant(1, -1), Vector::Constant(1, 1),
                                                    2.0, 2.0)),
                  InvalidArgument);
}

TEST_CASE("dataset files round trip") {
  const auto dir = std::filesystem::temp_directory_path() / "pgs_test_tasks";
  std::filesystem::remove_all(dir);
  const OfflineDataset ds = generate_offline_dataset(make_task("quadratic-bowl"), 300, 50.0, 2);
  save_dataset(ds, dir / "d.csv", "abc");
  const OfflineDataset back = load_dataset(dir / "d.csv");
  CHECK(back.inputs == ds.inputs);
  CHECK(back.outputs == ds.outputs);
  CHECK(back.pool_min == ds.pool_min);
  CHECK(back.pool_max == ds.pool_max);
  CHECK(back.input_std == ds.input_std);
  CHECK(back.task_name == "quadratic-bowl");
  CHECK(read_file(dir / "d.csv").rfind("x0,x1,x2,x3,x4,y\n", 0) == 0);
  CHECK(read_file(dir / "d.csv.meta").find("keep_percentile=") != std::string::npos);
  CHECK_THROWS_AS(load_dataset(dir / "missing.csv"), Error);
  std::filesystem::remove_all(dir);
}
