#include <algorithm>
#include <cmath>
#include <string>

#include "doctest.h"
#include "pgs/config.hpp"
#include "pgs/error.hpp"
#include "pgs/results.hpp"

using namespace pgs;

namespace {

const char* kTiny =
    "task=quadratic-bowl\n"
    "dataset.pool_size=300\n"
    "surrogate.hidden_width=8\n"
    "surrogate.epochs=1\n"
    "trajectories.m=10\n"
    "trajectories.T=6\n"
    "agent.method=pgs-cql,grad\n"
    "agent.epochs=2\n"
    "agent.steps_per_epoch=2\n"
    "agent.batch_size=16\n"
    "agent.hidden_width=8\n"
    "agent.checkpoint_interval=1\n"
    "search.N=8\n"
    "search.T_test=5\n"
    "run.seeds=0,1\n";

std::size_t count_lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("config parsing and rendering") {
  const RunConfig cfg = parse_config(std::string("# comment\n\n") + kTiny);
  CHECK(cfg.task == "quadratic-bowl");
  CHECK(cfg.pool_size == 300);
  CHECK(cfg.methods.size() == 2);
  CHECK(cfg.seeds == std::vector<std::uint64_t>{0, 1});
  CHECK(get_config_value(cfg, "agent.epochs") == "2");

  const RunConfig again = parse_config(render_config(cfg));
  CHECK(render_config(again) == render_config(cfg));
  CHECK(again.hash() == cfg.hash());

  RunConfig other = cfg;
  set_config_value(other, "run.output_dir", "/elsewhere");
  set_config_value(other, "run.jobs", "4");
  CHECK(other.hash() == cfg.hash());
  set_config_value(other, "agent.gamma", "0.9");
  CHECK(other.hash() != cfg.hash());

  RunConfig bad = cfg;
  CHECK_THROWS_AS(set_config_value(bad, "agent.nope", "1"), InvalidArgument);
  CHECK_THROWS_AS(set_config_value(bad, "agent.epochs", "two"), InvalidArgument);
  CHECK_THROWS_AS(set_config_value(bad, "agent.method", "newton"), InvalidArgument);
  CHECK_THROWS_AS(parse_config("just words\n"), FormatError);
  CHECK_THROWS_AS(parse_config("dataset.pool_size=50\ntask=quadratic-bowl\n").validate(), InvalidArgument);
  CHECK(parse_double_list("10, 20,40") == std::vector<double>{10, 20, 40});
  CHECK_THROWS_AS(parse_int_list(""), InvalidArgument);
}

TEST_CASE("tiny experiment end to end") {
  const RunConfig cfg = parse_config(kTiny);
  const ExperimentResult res = run_experiment(cfg);
  // per seed: one grad row and one pgs-cql row
  REQUIRE(res.reports.size() == 4);
  REQUIRE(res.aggregates.size() == 2);
  for (const auto& r : res.reports) {
    CHECK(r.action_norm_trace.size() == 5);
    CHECK(std::isfinite(r.score100));
    CHECK(r.score100 >= r.score50);
    if (r.method == "grad") {
      CHECK(std::isnan(r.p));
      CHECK(r.epochs == 0);
    } else {
      CHECK(r.p == 40.0);
    }
  }

  const std::string csv = results_csv(res, cfg.hash(), false);
  CHECK(csv.rfind("# config_hash=" + cfg.hash() + "\n", 0) == 0);
  CHECK(count_lines(csv) == 2 + 4 + 2);
  CHECK(csv.find(",NA,") != std::string::npos);
  CHECK(csv.find(",agg,") != std::string::npos);
  CHECK(csv == results_csv(run_experiment(cfg), cfg.hash(), false));

  const std::vector<Report> parsed = parse_results_csv(csv);
  REQUIRE(parsed.size() == 6);
  CHECK(parsed[0].score100 == res.reports[0].score100);
  CHECK(parsed.back().seed == "agg");
  const std::string table = report_table(parsed);
  CHECK(table.find("quadratic-bowl") != std::string::npos);
  CHECK(table.find("d_best") != std::string::npos);
  CHECK(table.find('*') != std::string::npos);

  const std::string norms = action_norm_csv(res, cfg.hash());
  // aggregate rows carry the mean trace too
  CHECK(count_lines(norms) == 2 + 6 * 5);

  RunConfig only_grad = cfg;
  set_config_value(only_grad, "agent.method", "grad");
  CHECK(run_experiment(only_grad).reports.size() == 2);
}

TEST_CASE("results parsing errors") {
  CHECK(report_table({}) == "no results\n");
  CHECK_THROWS_AS(parse_results_csv("a,b,c\n1,2,3\n"), FormatError);
}
