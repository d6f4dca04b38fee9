#include "pgs/experiment.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <future>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>

#include "pgs/checkpoint.hpp"
#include "pgs/error.hpp"
#include "pgs/log.hpp"
#include "pgs/trajectories.hpp"

namespace pgs {

std::string method_name(Method m) {
  switch (m) {
    case Method::PgsCql:
      return "pgs-cql";
    case Method::PgsSac:
      return "pgs-sac";
    case Method::Grad:
      return "grad";
  }
  return "unknown";
}

Method parse_method(const std::string& name) {
  if (name == "pgs-cql" || name == "pgs") return Method::PgsCql;
  if (name == "pgs-sac") return Method::PgsSac;
  if (name == "grad") return Method::Grad;
  throw InvalidArgument("unknown method '" + name + "' (expected pgs-cql, pgs-sac or grad)");
}

OfflineDataset dataset_for(const RunConfig& cfg) {
  try {
    if (!cfg.dataset_path.empty()) return load_dataset(cfg.dataset_path);
    return generate_offline_dataset(make_task(cfg.task), cfg.pool_size, cfg.keep_percentile, cfg.dataset_seed);
  } catch (const Error& e) {
    throw StageError("dataset", e.what());
  }
}

Surrogate obtain_surrogate(const RunConfig& cfg, const OfflineDataset& ds, std::uint64_t seed) {
  SurrogateConfig sc = cfg.surrogate;
  sc.seed = derive_seed(seed, 10);
  std::filesystem::path cached;
  if (!cfg.cache_dir.empty()) {
    std::ostringstream key;
    key.precision(17);
    key << dataset_fingerprint(ds) << "|" << sc.hidden_width << "x" << sc.hidden_layers << "|" << sc.epochs << "|"
        << sc.batch_size << "|" << sc.lr << "|" << sc.seed;
    cached = std::filesystem::path(cfg.cache_dir) / ("surrogate-" + content_hash(key.str()) + ".ckpt");
    if (std::filesystem::exists(cached)) {
      log_info("surrogate cache hit " + cached.string());
      return load_surrogate(cached);
    }
  }
  try {
    Surrogate s = train_surrogate(ds, sc);
    if (!cached.empty()) save_surrogate(s, cached);
    return s;
  } catch (const Error& e) {
    throw StageError("surrogate", e.what());
  }
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

Report make_report(const RunConfig& cfg, const Task& task, const OfflineDataset& ds, const std::string& method,
                   double p, int epochs, int T, int m, std::uint64_t seed, const BatchSearch& search) {
  Report r;
  r.task = cfg.task;
  r.method = method;
  r.p = p;
  r.epochs = epochs;
  r.test_length = T;
  r.traj_count = m;
  r.seed = std::to_string(seed);
  const CandidateScores sc = evaluate_candidates(task, ds, search.final_states());
  r.score100 = sc.score100;
  r.score50 = sc.score50;
  r.d_best = d_best(ds).normalized;
  r.action_norm_trace = search.mean_action_norms();
  if (!r.action_norm_trace.empty()) {
    r.action_norm_first = r.action_norm_trace.front();
    r.action_norm_last = r.action_norm_trace.back();
  }
  return r;
}

std::vector<Report> run_seed(const RunConfig& cfg, const Task& task, const OfflineDataset& ds, std::uint64_t seed) {
  std::vector<Report> out;
  const auto seed_start = Clock::now();
  const Surrogate s = obtain_surrogate(cfg, ds, seed);
  log_info("seed " + std::to_string(seed) + ": surrogate ready in " + std::to_string(seconds_since(seed_start)) + "s");
  const Matrix starts = pick_starts(ds, cfg.num_starts);
  const double nan = std::numeric_limits<double>::quiet_NaN();

  bool wants_agent = false;
  for (Method m : cfg.methods) {
    if (m == Method::Grad) {
      log_info("seed " + std::to_string(seed) + ": grad baseline (agent training skipped)");
      for (int T : cfg.test_lengths) {
        const auto t0 = Clock::now();
        BatchSearch search = grad_baseline_batch(starts, s, T, cfg.grad_step);
        Report r = make_report(cfg, task, ds, "grad", nan, 0, T, 0, seed, search);
        r.wall_seconds = seconds_since(t0);
        out.push_back(std::move(r));
      }
    } else {
      wants_agent = true;
    }
  }
  if (!wants_agent) return out;

  for (double p : cfg.top_p) {
    for (int m : cfg.traj_counts) {
      TransitionSet set;
      try {
        const std::vector<int> top = select_top_p(ds, p);
        auto trajs = synthesize_trajectories(top, m, cfg.traj_length, derive_seed(seed, 20), &ds, cfg.monotonic);
        set = build_transition_set(trajs, s, ds, ActionBound{cfg.a_max}, cfg.grad_eps);
      } catch (const Error& e) {
        throw StageError("trajectories", e.what());
      }
      log_info("seed " + std::to_string(seed) + " p=" + std::to_string(p) + " m=" + std::to_string(m) + ": " +
               std::to_string(set.size()) + " tuples, clip rate " + std::to_string(set.stats.clip_rate) +
               ", mask rate " + std::to_string(set.stats.mask_rate));
      for (Method method : cfg.methods) {
        if (method == Method::Grad) continue;
        const auto t0 = Clock::now();
        TrainResult tr;
        try {
          tr = method == Method::PgsCql ? cql_train(set, cfg.agent, derive_seed(seed, 21))
                                        : sac_train(set, cfg.agent, derive_seed(seed, 21));
        } catch (const Error& e) {
          throw StageError("agent", e.what());
        }
        if (tr.aborted) log_info("agent training aborted: " + tr.failure + " (using last good epoch)");
        const double train_seconds = seconds_since(t0);
        for (int T : cfg.test_lengths) {
          const auto t1 = Clock::now();
          BatchSearch search;
          if (cfg.deterministic) {
            search = pgs_search_batch(starts, s, tr.agent, T);
          } else {
            std::mt19937_64 rng(derive_seed(seed, 22));
            search = guided_search(
                starts, s, [&](const Matrix& x) { return policy_act_batch(tr.agent, x, false, &rng); }, T);
          }
          Report r = make_report(cfg, task, ds, method_name(method), p, cfg.agent.epochs, T, m, seed, search);
          r.wall_seconds = train_seconds + seconds_since(t1);
          r.clip_rate = set.stats.clip_rate;
          r.mask_rate = set.stats.mask_rate;
          log_info("seed " + std::to_string(seed) + " " + r.method + " T=" + std::to_string(T) +
                   ": score100=" + std::to_string(r.score100) + " d_best=" + std::to_string(r.d_best));
          out.push_back(std::move(r));
        }
      }
    }
  }
  return out;
}

}  // namespace

std::vector<Report> aggregate_reports(const std::vector<Report>& reports) {
  using Key = std::tuple<std::string, std::string, double, int, int, int>;
  std::map<Key, std::vector<const Report*>> groups;
  std::vector<Key> order;
  for (const auto& r : reports) {
    Key k{r.task, r.method, std::isnan(r.p) ? -1.0 : r.p, r.epochs, r.test_length, r.traj_count};
    if (!groups.count(k)) order.push_back(k);
    groups[k].push_back(&r);
  }
  std::vector<Report> out;
  for (const auto& k : order) {
    const auto& g = groups[k];
    Report a = *g.front();
    a.seed = "agg";
    const double n = static_cast<double>(g.size());
    auto mean_of = [&](auto field) {
      double s = 0.0;
      for (const auto* r : g) s += field(*r);
      return s / n;
    };
    auto std_of = [&](auto field, double mean) {
      double s = 0.0;
      for (const auto* r : g) s += (field(*r) - mean) * (field(*r) - mean);
      return std::sqrt(s / n);
    };
    a.score100 = mean_of([](const Report& r) { return r.score100; });
    a.score50 = mean_of([](const Report& r) { return r.score50; });
    a.score100_std = std_of([](const Report& r) { return r.score100; }, a.score100);
    a.score50_std = std_of([](const Report& r) { return r.score50; }, a.score50);
    a.d_best = mean_of([](const Report& r) { return r.d_best; });
    a.action_norm_first = mean_of([](const Report& r) { return r.action_norm_first; });
    a.action_norm_last = mean_of([](const Report& r) { return r.action_norm_last; });
    a.wall_seconds = mean_of([](const Report& r) { return r.wall_seconds; });
    for (std::size_t k2 = 0; k2 < a.action_norm_trace.size(); ++k2) {
      double s = 0.0;
      for (const auto* r : g) s += r->action_norm_trace[k2];
      a.action_norm_trace[k2] = s / n;
    }
    out.push_back(std::move(a));
  }
  return out;
}

ExperimentResult run_experiment(const RunConfig& cfg) {
  cfg.validate();
  return run_experiment(cfg, dataset_for(cfg));
}

ExperimentResult run_experiment(const RunConfig& cfg, const OfflineDataset& ds) {
  cfg.validate();
  const Task task = make_task(cfg.task);
  if (task.dim != ds.dim()) throw StageError("dataset", "dataset dimension does not match task " + cfg.task);

  std::vector<std::vector<Report>> per_seed(cfg.seeds.size());
  const std::size_t jobs = static_cast<std::size_t>(std::max(1, cfg.jobs));
  for (std::size_t begin = 0; begin < cfg.seeds.size(); begin += jobs) {
    const std::size_t end = std::min(cfg.seeds.size(), begin + jobs);
    if (end - begin == 1) {
      per_seed[begin] = run_seed(cfg, task, ds, cfg.seeds[begin]);
      continue;
    }
    std::vector<std::future<std::vector<Report>>> futs;
    for (std::size_t i = begin; i < end; ++i) {
      futs.push_back(std::async(std::launch::async, [&, i] { return run_seed(cfg, task, ds, cfg.seeds[i]); }));
    }
    for (std::size_t i = begin; i < end; ++i) per_seed[i] = futs[i - begin].get();
  }

  ExperimentResult result;
  for (auto& v : per_seed)
    for (auto& r : v) result.reports.push_back(std::move(r));
  result.aggregates = aggregate_reports(result.reports);
  return result;
}

}  // namespace pgs
