#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pgs/agents.hpp"
#include "pgs/checkpoint.hpp"
#include "pgs/config.hpp"
#include "pgs/error.hpp"
#include "pgs/experiment.hpp"
#include "pgs/log.hpp"
#include "pgs/osel.hpp"
#include "pgs/results.hpp"
#include "pgs/search.hpp"
#include "pgs/surrogate.hpp"
#include "pgs/tasks.hpp"
#include "pgs/trajectories.hpp"

namespace fs = std::filesystem;
using namespace pgs;

namespace {

fs::path output_root() {
  const char* env = std::getenv("PGS_OUTPUT_ROOT");
  return env && *env ? fs::path(env) : fs::current_path();
}

// Relative output paths live under the output root.
fs::path resolve(const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : output_root() / path;
}

struct Timer {
  std::string stage;
  std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
  explicit Timer(std::string s) : stage(std::move(s)) { log_info("stage " + stage + " ..."); }
  ~Timer() {
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    log_info("stage " + stage + " done in " + std::to_string(secs) + "s");
  }
};

RunConfig config_from(const std::string& file, const std::vector<std::string>& sets) {
  RunConfig cfg = file.empty() ? RunConfig{} : load_config(file);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw InvalidArgument("--set expects key=value, got '" + kv + "'");
    set_config_value(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  return cfg;
}

fs::path run_dir(const RunConfig& cfg, const std::string& out) {
  if (!out.empty()) return resolve(out);
  if (!cfg.output_dir.empty()) return resolve(cfg.output_dir);
  return output_root() / "runs" / cfg.hash();
}

void apply_ablation(RunConfig& cfg, const std::vector<std::string>& ablation) {
  if (ablation.empty()) return;
  const std::string& name = ablation[0];
  const std::string values = ablation.size() > 1 ? ablation[1] : "";
  if (name == "traj-length" || name == "test-length") {
    cfg.test_lengths = parse_int_list(values);
  } else if (name == "traj-count") {
    cfg.traj_counts = parse_int_list(values);
  } else if (name == "top-p-vs-full") {
    const double p = values.empty() ? cfg.top_p.front() : parse_double_list(values).front();
    cfg.top_p = p == 100.0 ? std::vector<double>{100.0} : std::vector<double>{p, 100.0};
  } else if (name == "method") {
    set_config_value(cfg, "agent.method", values.empty() ? "pgs-cql,pgs-sac,grad" : values);
  } else if (name == "monotonic") {
    cfg.monotonic = true;
  } else {
    throw InvalidArgument("unknown ablation '" + name +
                          "' (expected traj-length, traj-count, top-p-vs-full, method or monotonic)");
  }
}

int cmd_pipeline(const RunConfig& base, const std::vector<std::string>& ablation, int jobs, const std::string& out) {
  RunConfig cfg = base;
  apply_ablation(cfg, ablation);
  if (jobs > 0) cfg.jobs = jobs;
  if (cfg.cache_dir.empty()) cfg.cache_dir = (output_root() / "cache").string();
  {
    Timer t("validate");
    cfg.validate();
  }
  const fs::path dir = run_dir(cfg, out);
  const std::string hash = cfg.hash();
  write_file(dir / "config.txt", "# config_hash=" + hash + "\n" + cfg.canonical());
  OfflineDataset ds;
  {
    Timer t("dataset");
    ds = dataset_for(cfg);
    save_dataset(ds, dir / "dataset.csv", hash);
  }
  ExperimentResult res;
  {
    Timer t("experiment");
    res = run_experiment(cfg, ds);
  }
  write_file(dir / "results.csv", results_csv(res, hash, cfg.record_wall_time));
  write_file(dir / "action_norms.csv", action_norm_csv(res, hash));
  std::cout << report_table(res.reports);
  std::cout << "results: " << (dir / "results.csv").string() << "\n";
  return 0;
}

int cmd_tune(const RunConfig& base, const std::string& out) {
  RunConfig cfg = base;
  if (cfg.cache_dir.empty()) cfg.cache_dir = (output_root() / "cache").string();
  cfg.validate();
  const fs::path dir = run_dir(cfg, out);
  const std::string hash = cfg.hash();
  const OfflineDataset ds = dataset_for(cfg);
  const std::uint64_t seed0 = cfg.seeds.front();
  Surrogate s;
  {
    Timer t("surrogate");
    s = obtain_surrogate(cfg, ds, seed0);
  }
  Encoder enc;
  {
    Timer t("encoder");
    try {
      enc = train_encoder(ds, cfg.encoder, derive_seed(seed0, 30));
    } catch (const Error& e) {
      throw StageError("osel", e.what());
    }
    save_encoder(enc, dir / "encoder.ckpt", hash);
  }
  const KnnIndex index(enc, ds);
  GridSpec grid = cfg.grid;
  grid.num_starts = cfg.num_starts;
  TrajectorySpec traj{cfg.traj_counts.front(), cfg.traj_length, cfg.monotonic, cfg.a_max, cfg.grad_eps};
  GridResult r;
  {
    Timer t("grid");
    try {
      r = hyperparameter_select(ds, s, index, grid, traj, cfg.agent, cfg.seeds);
    } catch (const Error& e) {
      throw StageError("tune", e.what());
    }
  }
  if (r.tie_break_applied) log_info("tie-break: " + r.tie_note);
  write_file(dir / "grid.csv", grid_csv(r, hash));
  std::cout << "selected p=" << r.selected_p << " epochs=" << r.selected_epochs << "\n";
  if (r.tie_break_applied) std::cout << "tie-break: " << r.tie_note << "\n";
  std::cout << "grid: " << (dir / "grid.csv").string() << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Policy-guided gradient search for offline black-box optimization"};
  app.require_subcommand(1);
  app.fallthrough();
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress progress logging");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "Sample a task and write the offline dataset");
  std::string g_task, g_out;
  int g_pool = 5000;
  double g_keep = 40.0;
  std::uint64_t g_seed = 0;
  gen->add_option("--task", g_task, "Task name")->required()->check(CLI::IsMember(builtin_task_names()));
  gen->add_option("--pool", g_pool, "Pool size")->capture_default_str();
  gen->add_option("--keep", g_keep, "Kept percentile of the pool (lowest values)")->capture_default_str();
  gen->add_option("--seed", g_seed, "Sampling seed")->capture_default_str();
  gen->add_option("-o,--out", g_out, "Output CSV (default data/<task>-s<seed>.csv)");

  // train-surrogate
  auto* ts = app.add_subcommand("train-surrogate", "Fit the surrogate to a dataset");
  std::string ts_data, ts_out;
  SurrogateConfig ts_cfg;
  ts->add_option("--data", ts_data, "Dataset CSV")->required();
  ts->add_option("--width", ts_cfg.hidden_width)->capture_default_str();
  ts->add_option("--layers", ts_cfg.hidden_layers)->capture_default_str();
  ts->add_option("--epochs", ts_cfg.epochs)->capture_default_str();
  ts->add_option("--batch", ts_cfg.batch_size)->capture_default_str();
  ts->add_option("--lr", ts_cfg.lr)->capture_default_str();
  ts->add_option("--seed", ts_cfg.seed)->capture_default_str();
  ts->add_option("-o,--out", ts_out, "Checkpoint path")->required();

  // build-transitions
  auto* bt = app.add_subcommand("build-transitions", "Synthesize trajectories and recover actions");
  std::string bt_data, bt_sur, bt_out;
  double bt_p = 40.0, bt_amax = 0.05, bt_eps = kDefaultGradEps;
  int bt_m = 2000, bt_T = 50;
  std::uint64_t bt_seed = 0;
  bool bt_mono = false;
  bt->add_option("--data", bt_data, "Dataset CSV")->required();
  bt->add_option("--surrogate", bt_sur, "Surrogate checkpoint")->required();
  bt->add_option("--p", bt_p, "Top percentile used for trajectories")->capture_default_str();
  bt->add_option("--m", bt_m, "Number of trajectories")->capture_default_str();
  bt->add_option("--T", bt_T, "Trajectory length")->capture_default_str();
  bt->add_option("--seed", bt_seed)->capture_default_str();
  bt->add_option("--a-max", bt_amax)->capture_default_str();
  bt->add_option("--grad-eps", bt_eps)->capture_default_str();
  bt->add_flag("--monotonic", bt_mono, "Order each trajectory by increasing y");
  bt->add_option("-o,--out", bt_out, "Transition CSV")->required();

  // train-policy
  auto* tp = app.add_subcommand("train-policy", "Train a CQL or SAC agent on a transition set");
  std::string tp_trans, tp_cfg_file, tp_method = "pgs-cql", tp_out;
  std::vector<std::string> tp_sets;
  std::uint64_t tp_seed = 0;
  tp->add_option("--transitions", tp_trans, "Transition CSV")->required();
  tp->add_option("-c,--config", tp_cfg_file, "Config file (agent.* keys are used)");
  tp->add_option("--set", tp_sets, "Override a config key (key=value)");
  tp->add_option("--method", tp_method)->check(CLI::IsMember({"pgs-cql", "pgs-sac"}))->capture_default_str();
  tp->add_option("--seed", tp_seed)->capture_default_str();
  tp->add_option("-o,--out", tp_out, "Agent checkpoint")->required();

  // search
  auto* se = app.add_subcommand("search", "Run N guided searches and score them with the oracle");
  std::string se_data, se_sur, se_agent, se_out;
  int se_N = kDefaultNumStarts, se_T = 50;
  double se_eta = kDefaultGradStep;
  se->add_option("--data", se_data, "Dataset CSV")->required();
  se->add_option("--surrogate", se_sur, "Surrogate checkpoint")->required();
  se->add_option("--agent", se_agent, "Agent checkpoint (omit for the grad baseline)");
  se->add_option("--N", se_N)->capture_default_str();
  se->add_option("--T", se_T)->capture_default_str();
  se->add_option("--eta", se_eta, "Grad baseline step")->capture_default_str();
  se->add_option("-o,--out", se_out, "Write final candidates to this CSV");

  // tune
  auto* tu = app.add_subcommand("tune", "OSEL grid search over (p, epochs)");
  std::string tu_cfg, tu_out;
  std::vector<std::string> tu_sets;
  tu->add_option("config", tu_cfg, "Config file")->required();
  tu->add_option("--set", tu_sets, "Override a config key (key=value)");
  tu->add_option("-o,--out", tu_out, "Output directory");

  // pipeline
  auto* pl = app.add_subcommand("pipeline", "Full experiment from a config file");
  std::string pl_cfg, pl_out;
  std::vector<std::string> pl_sets, pl_ablation;
  int pl_jobs = 0;
  pl->add_option("config", pl_cfg, "Config file")->required();
  pl->add_option("--set", pl_sets, "Override a config key (key=value)");
  pl->add_option("--ablation", pl_ablation, "Ablation name and values, e.g. traj-length 50,60,70")
      ->expected(1, 2);
  pl->add_option("--jobs", pl_jobs, "Seeds run in parallel");
  pl->add_option("-o,--out", pl_out, "Output directory");

  // report
  auto* rp = app.add_subcommand("report", "Format a results CSV as a table");
  std::string rp_csv;
  rp->add_option("results", rp_csv, "Results CSV")->required();

  CLI11_PARSE(app, argc, argv);
  log_enabled() = !quiet;

  try {
    if (gen->parsed()) {
      RunConfig cfg;
      cfg.task = g_task;
      cfg.pool_size = g_pool;
      cfg.keep_percentile = g_keep;
      cfg.dataset_seed = g_seed;
      cfg.validate();
      const OfflineDataset ds = dataset_for(cfg);
      const fs::path out = g_out.empty() ? resolve("data/" + g_task + "-s" + std::to_string(g_seed) + ".csv")
                                         : resolve(g_out);
      save_dataset(ds, out, cfg.hash());
      std::cout << "wrote " << out.string() << " (n=" << ds.size() << ", d=" << ds.dim() << ", d_best="
                << d_best(ds).normalized << ")\n";
    } else if (ts->parsed()) {
      const OfflineDataset ds = load_dataset(ts_data);
      Surrogate s;
      {
        Timer t("surrogate");
        s = train_surrogate(ds, ts_cfg);
      }
      save_surrogate(s, resolve(ts_out), dataset_fingerprint(ds));
      std::cout << "surrogate mse " << s.epoch_mse.front() << " -> " << s.epoch_mse.back() << "\n";
    } else if (bt->parsed()) {
      const OfflineDataset ds = load_dataset(bt_data);
      const Surrogate s = load_surrogate(bt_sur);
      const auto top = select_top_p(ds, bt_p);
      const auto trajs = synthesize_trajectories(top, bt_m, bt_T, bt_seed, &ds, bt_mono);
      const TransitionSet set = build_transition_set(trajs, s, ds, ActionBound{bt_amax}, bt_eps);
      TransitionMeta meta{bt_p, bt_T, bt_m, bt_seed, content_hash(read_file(bt_sur)), ""};
      save_transitions(set, meta, resolve(bt_out));
      std::cout << set.size() << " tuples, mean |a| " << set.stats.mean_abs_action << ", clip rate "
                << set.stats.clip_rate << ", mask rate " << set.stats.mask_rate << "\n";
    } else if (tp->parsed()) {
      const RunConfig cfg = config_from(tp_cfg_file, tp_sets);
      cfg.agent.validate();
      const TransitionSet set = load_transitions(tp_trans);
      TrainResult tr;
      {
        Timer t("agent");
        tr = tp_method == "pgs-cql" ? cql_train(set, cfg.agent, tp_seed) : sac_train(set, cfg.agent, tp_seed);
      }
      save_agent(tr.agent, resolve(tp_out), cfg.hash());
      for (const auto& ck : tr.checkpoints) {
        fs::path p = resolve(tp_out);
        p.replace_extension(".epoch" + std::to_string(ck.epoch) + ".ckpt");
        save_agent(ck.agent, p, cfg.hash());
      }
      if (!tr.log.empty()) {
        const auto& last = tr.log.back();
        std::cout << "epoch " << last.epoch << " critic " << last.critic_loss << " td " << last.td_loss << "\n";
      }
      if (tr.aborted) {
        std::cerr << "training aborted: " << tr.failure << "\n";
        return 1;
      }
    } else if (se->parsed()) {
      const OfflineDataset ds = load_dataset(se_data);
      const Surrogate s = load_surrogate(se_sur);
      const Task task = make_task(ds.task_name);
      const Matrix starts = pick_starts(ds, se_N);
      BatchSearch res;
      if (se_agent.empty()) {
        res = grad_baseline_batch(starts, s, se_T, se_eta);
      } else {
        res = pgs_search_batch(starts, s, load_agent(se_agent), se_T);
      }
      const CandidateScores sc = evaluate_candidates(task, ds, res.final_states());
      const auto norms = res.mean_action_norms();
      std::cout << "score100 " << sc.score100 << " score50 " << sc.score50 << " d_best " << d_best(ds).normalized
                << "\n";
      if (!norms.empty()) std::cout << "mean |a| first " << norms.front() << " last " << norms.back() << "\n";
      if (!se_out.empty()) {
        OfflineDataset cand = ds;
        cand.inputs = res.final_states();
        cand.outputs.resize(cand.inputs.rows());
        for (Eigen::Index i = 0; i < cand.inputs.rows(); ++i)
          cand.outputs(i) = oracle_eval(task, cand.inputs.row(i).transpose());
        save_dataset(cand, resolve(se_out));
      }
    } else if (tu->parsed()) {
      return cmd_tune(config_from(tu_cfg, tu_sets), tu_out);
    } else if (pl->parsed()) {
      return cmd_pipeline(config_from(pl_cfg, pl_sets), pl_ablation, pl_jobs, pl_out);
    } else if (rp->parsed()) {
      std::cout << report_table(parse_results_csv(read_file(rp_csv)));
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
