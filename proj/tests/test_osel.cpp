#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numeric>
#include <random>

#include "doctest.h"
#include "pgs/error.hpp"
#include "pgs/osel.hpp"
#include "pgs/search.hpp"
#include "test_util.hpp"

using namespace pgs;

namespace {

EncoderConfig small_encoder() {
  EncoderConfig c;
  c.latent_dim = 4;
  c.window = 3;
  c.hidden_width = 16;
  c.trajectories = 40;
  c.length = 12;
  c.epochs = 4;
  c.batch_size = 32;
  c.lr = 3e-3;
  return c;
}

Agent zero_agent(int d) {
  CqlConfig cfg;
  cfg.hidden_width = 8;
  Agent a = make_agent(d, cfg, ActionBound{}, 1, Vector::Zero(d), Vector::Ones(d));
  a.actor = Mlp::zeros(a.actor.dims());
  return a;
}

}  // namespace

TEST_CASE("latent nearest neighbours agree with brute force") {
  const OfflineDataset ds = pgs_test::linear_dataset(Vector::LinSpaced(3, -1.0, 2.0), 50, 3);
  const Encoder enc = train_encoder(ds, small_encoder(), 4);
  const KnnIndex index(enc, ds);
  std::mt19937_64 rng(5);
  for (int t = 0; t < 10; ++t) {
    const Vector x = pgs_test::random_vector(3, rng);
    const Vector z = enc.embed(x);
    std::vector<std::pair<double, int>> dist;
    for (int i = 0; i < ds.size(); ++i) dist.push_back({(enc.embed(ds.input(i)) - z).squaredNorm(), i});
    std::sort(dist.begin(), dist.end());
    const auto nn = index.neighbors(x, 5);
    double sum = 0.0;
    for (int j = 0; j < 5; ++j) {
      CHECK(nn[j] == dist[j].second);
      sum += ds.outputs(dist[j].second);
    }
    CHECK(index.estimate(x, 5) == doctest::Approx(sum / 5).epsilon(1e-14));
    CHECK(index.estimate(x, ds.size()) == doctest::Approx(ds.outputs.mean()).epsilon(1e-12));
  }
  for (int i = 0; i < ds.size(); i += 7) CHECK(index.estimate(ds.input(i), 1) == ds.outputs(i));
  CHECK(index.estimate_batch(ds.inputs.topRows(4), 2)(1) == index.estimate(ds.input(1), 2));
  CHECK(knn_estimate(enc, ds, ds.input(0), 3) == index.estimate(ds.input(0), 3));
  CHECK_THROWS_AS(index.estimate(ds.input(0), 0), InvalidArgument);
  CHECK_THROWS_AS(index.estimate(ds.input(0), ds.size() + 1), InvalidArgument);
}

TEST_CASE("encoder training") {
  SUBCASE("constant objective is fit exactly") {
    const int n = 40;
    Matrix x = Matrix::Random(n, 2);
    const OfflineDataset ds =
        make_dataset("flat", x, Vector::Constant(n, 2.5), Vector::Constant(2, -1), Vector::Ones(2), 0.0, 5.0);
    const Encoder enc = train_encoder(ds, small_encoder(), 1);
    for (double l : enc.loss_log) CHECK(l < 1e-8);
  }
  SUBCASE("loss decreases on held-out windows") {
    const OfflineDataset ds = generate_offline_dataset(make_task("quadratic-bowl"), 1000, 40.0, 2);
    EncoderConfig cfg = small_encoder();
    cfg.epochs = 0;
    const Encoder before = train_encoder(ds, cfg, 7);
    cfg.epochs = 15;
    const Encoder after = train_encoder(ds, cfg, 7);
    const EncoderSamples held = encoder_samples(ds, 40, 12, 3, 999);
    CHECK(encoder_loss(after, held) < encoder_loss(before, held));
    CHECK(after.loss_log.size() == 16);
    CHECK(after.loss_log.back() < after.loss_log.front());
    const Encoder again = train_encoder(ds, cfg, 7);
    CHECK(again.net == after.net);
    CHECK(again.heads == after.heads);

    const auto path = std::filesystem::temp_directory_path() / "pgs_test_encoder.ckpt";
    save_encoder(after, path);
    const Encoder loaded = load_encoder(path);
    CHECK(loaded.net == after.net);
    CHECK(loaded.embed(ds.input(3)) == after.embed(ds.input(3)));
    std::filesystem::remove(path);
  }
  SUBCASE("windows must fit") {
    const OfflineDataset ds = pgs_test::linear_dataset(Vector::Ones(2), 30, 1);
    CHECK_THROWS_AS(encoder_samples(ds, 4, 3, 3, 1), InvalidArgument);
  }
}

TEST_CASE("score of a zero policy is the estimate at the starts") {
  const OfflineDataset ds = pgs_test::linear_dataset(Vector::Ones(3), 60, 8);
  const Encoder enc = train_encoder(ds, small_encoder(), 2);
  const KnnIndex index(enc, ds);
  Mlp net = Mlp::zeros({3, 1});
  net.weight(0).setOnes();
  const Surrogate s = make_surrogate(net, ds);
  const double score = osel_score(index, ds, s, zero_agent(3), 10, 20, 3);
  CHECK(score == doctest::Approx(index.estimate_batch(pick_starts(ds, 10), 3).mean()).epsilon(1e-14));
}

TEST_CASE("cell selection") {
  auto never = [](const GridCell&) -> double { throw std::logic_error("no rescoring expected"); };
  SUBCASE("single cell") {
    const GridResult r = select_cell({{20, 50, 0.3, false}}, 1e-9, never);
    CHECK(r.selected_p == 20);
    CHECK(r.selected_epochs == 50);
    CHECK_FALSE(r.tie_break_applied);
  }
  SUBCASE("argmax, skipping missing cells") {
    const GridResult r =
        select_cell({{10, 50, 0.1, false}, {20, 50, 0.4, false}, {30, 100, 9.0, true}, {40, 100, 0.2, false}}, 1e-9,
                    never);
    CHECK(r.selected_p == 20);
    CHECK(r.selected_epochs == 50);
  }
  SUBCASE("tie re-scored, then smaller epochs, then smaller p") {
    std::vector<GridCell> cells{{30, 100, 0.5, false}, {20, 100, 0.5, false}, {10, 150, 0.5, false}};
    GridResult r = select_cell(cells, 1e-9, [](const GridCell& c) { return c.p == 10 ? 2.0 : 1.0; });
    CHECK(r.tie_break_applied);
    CHECK(r.selected_p == 10);
    r = select_cell(cells, 1e-9, [](const GridCell&) { return 1.0; });
    CHECK(r.selected_p == 20);
    CHECK(r.selected_epochs == 100);
    CHECK_FALSE(r.tie_note.empty());
  }
  SUBCASE("nothing scored") {
    CHECK_THROWS_AS(select_cell({{10, 50, 0.0, true}}, 1e-9, never), InvalidArgument);
  }
}

TEST_CASE("rank correlation") {
  Vector a(4), b(4);
  a << 1, 2, 2, 3;
  b << 1, 2, 3, 4;
  CHECK(spearman(a, b) == doctest::Approx(0.9486832980505138).epsilon(1e-14));
  CHECK(spearman(b, b) == doctest::Approx(1.0));
  CHECK(spearman(b, -b) == doctest::Approx(-1.0));
  CHECK_THROWS_AS(spearman(Vector::Ones(1), Vector::Ones(1)), InvalidArgument);
  CHECK_THROWS_AS(spearman(a, Vector::Ones(3)), InvalidArgument);
}

TEST_CASE("small hyperparameter grid") {
  const OfflineDataset ds = generate_offline_dataset(make_task("quadratic-bowl"), 400, 50.0, 3);
  SurrogateConfig sc;
  sc.hidden_width = 16;
  sc.epochs = 2;
  const Surrogate s = train_surrogate(ds, sc);
  const Encoder enc = train_encoder(ds, small_encoder(), 3);
  const KnnIndex index(enc, ds);
  GridSpec grid;
  grid.p_values = {20, 40};
  grid.max_epochs = 4;
  grid.interval = 2;
  grid.k = 5;
  grid.k_tie = 20;
  grid.num_starts = 8;
  TrajectorySpec traj;
  traj.m = 10;
  traj.T = 6;
  CqlConfig cfg;
  cfg.steps_per_epoch = 2;
  cfg.batch_size = 16;
  cfg.hidden_width = 8;
  const GridResult r = hyperparameter_select(ds, s, index, grid, traj, cfg, {0});
  REQUIRE(r.cells.size() == 4);
  for (const auto& c : r.cells) CHECK_FALSE(c.missing);
  CHECK(r.find(r.selected_p, r.selected_epochs) != nullptr);
  double best = -1e300;
  for (const auto& c : r.cells) best = std::max(best, c.score);
  CHECK(r.find(r.selected_p, r.selected_epochs)->score >= best - 1e-9);

  const std::string csv = grid_csv(r, "abc");
  CHECK(csv.rfind("# config_hash=abc\np,epochs,osel_score,selected\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 6);
  CHECK(csv.find(",true\n") != std::string::npos);

  grid.p_values.clear();
  CHECK_THROWS_AS(hyperparameter_select(ds, s, index, grid, traj, cfg, {0}), InvalidArgument);
}
