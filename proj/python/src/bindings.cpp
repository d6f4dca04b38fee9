#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "pgs/agents.hpp"
#include "pgs/checkpoint.hpp"
#include "pgs/config.hpp"
#include "pgs/error.hpp"
#include "pgs/experiment.hpp"
#include "pgs/numerics.hpp"
#include "pgs/osel.hpp"
#include "pgs/results.hpp"
#include "pgs/search.hpp"
#include "pgs/surrogate.hpp"
#include "pgs/tasks.hpp"
#include "pgs/trajectories.hpp"

namespace py = pybind11;
using namespace pgs;

PYBIND11_MODULE(_core, m) {
  m.doc() = "Policy-guided gradient search core";

  auto err = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<InvalidArgument>(m, "InvalidArgument", err.ptr());
  py::register_exception<DimensionMismatch>(m, "DimensionMismatch", err.ptr());
  py::register_exception<InvalidArchitecture>(m, "InvalidArchitecture", err.ptr());
  py::register_exception<NumericFailure>(m, "NumericFailure", err.ptr());
  py::register_exception<TooSmallDataset>(m, "TooSmallDataset", err.ptr());
  py::register_exception<InfeasibleTrajectory>(m, "InfeasibleTrajectory", err.ptr());
  py::register_exception<FormatError>(m, "FormatError", err.ptr());

  py::class_<Mlp>(m, "Mlp")
      .def_static("init", &Mlp::init, py::arg("dims"), py::arg("seed"))
      .def_static("zeros", &Mlp::zeros)
      .def_property_readonly("dims", &Mlp::dims)
      .def("parameter_count", &Mlp::parameter_count)
      .def("forward", &Mlp::forward)
      .def("forward_batch", [](const Mlp& n, const Matrix& x) { return n.forward_batch(x); })
      .def("input_gradient", &Mlp::input_gradient);
  m.def("finite_diff_check", &finite_diff_check, py::arg("net"), py::arg("x"), py::arg("h") = 1e-5);

  py::class_<Task>(m, "Task")
      .def_readonly("name", &Task::name)
      .def_readonly("dim", &Task::dim)
      .def_readonly("lo", &Task::lo)
      .def_readonly("hi", &Task::hi)
      .def("__call__", [](const Task& t, const Vector& x) { return oracle_eval(t, x); });
  m.def("make_task", &make_task);
  m.def("task_names", &builtin_task_names);

  py::class_<OfflineDataset>(m, "OfflineDataset")
      .def_readonly("task_name", &OfflineDataset::task_name)
      .def_readonly("inputs", &OfflineDataset::inputs)
      .def_readonly("outputs", &OfflineDataset::outputs)
      .def_readonly("pool_min", &OfflineDataset::pool_min)
      .def_readonly("pool_max", &OfflineDataset::pool_max)
      .def("__len__", &OfflineDataset::size)
      .def_property_readonly("dim", &OfflineDataset::dim);
  m.def("generate_dataset", &generate_offline_dataset, py::arg("task"), py::arg("pool_size") = 5000,
        py::arg("keep_percentile") = 40.0, py::arg("seed") = 0);
  m.def(
      "generate_dataset",
      [](const std::string& name, int pool_size, double keep, std::uint64_t seed) {
        return generate_offline_dataset(make_task(name), pool_size, keep, seed);
      },
      py::arg("task"), py::arg("pool_size") = 5000, py::arg("keep_percentile") = 40.0, py::arg("seed") = 0);
  m.def("load_dataset", &load_dataset);
  m.def("save_dataset", &save_dataset, py::arg("ds"), py::arg("path"), py::arg("config_hash") = "");
  m.def("d_best", [](const OfflineDataset& ds) { return d_best(ds).normalized; });
  m.def("normalize_score", &normalize_score);

  py::class_<SurrogateConfig>(m, "SurrogateConfig")
      .def(py::init<>())
      .def_readwrite("hidden_width", &SurrogateConfig::hidden_width)
      .def_readwrite("hidden_layers", &SurrogateConfig::hidden_layers)
      .def_readwrite("epochs", &SurrogateConfig::epochs)
      .def_readwrite("batch_size", &SurrogateConfig::batch_size)
      .def_readwrite("lr", &SurrogateConfig::lr)
      .def_readwrite("seed", &SurrogateConfig::seed);
  py::class_<Surrogate>(m, "Surrogate")
      .def_readonly("epoch_mse", &Surrogate::epoch_mse)
      .def("value", &surrogate_value)
      .def("values", &surrogate_values)
      .def("grad", &surrogate_grad)
      .def("grad_batch", &surrogate_grad_batch);
  m.def("train_surrogate", [](const OfflineDataset& ds, const SurrogateConfig& cfg) { return train_surrogate(ds, cfg); });
  m.def("save_surrogate", &save_surrogate, py::arg("s"), py::arg("path"), py::arg("config_hash") = "");
  m.def("load_surrogate", &load_surrogate);

  m.def("select_top_p", &select_top_p);
  m.def("synthesize_trajectories", [](const std::vector<int>& top, int mcount, int T, std::uint64_t seed,
                                      const OfflineDataset* ds, bool monotonic) {
    return synthesize_trajectories(top, mcount, T, seed, ds, monotonic);
  }, py::arg("top"), py::arg("m"), py::arg("T"), py::arg("seed"), py::arg("ds") = nullptr,
        py::arg("monotonic") = false);

  py::class_<TransitionStats>(m, "TransitionStats")
      .def_readonly("mean_abs_action", &TransitionStats::mean_abs_action)
      .def_readonly("clip_rate", &TransitionStats::clip_rate)
      .def_readonly("mask_rate", &TransitionStats::mask_rate);
  py::class_<TransitionSet>(m, "TransitionSet")
      .def_readonly("states", &TransitionSet::states)
      .def_readonly("actions", &TransitionSet::actions)
      .def_readonly("next_states", &TransitionSet::next_states)
      .def_readonly("rewards", &TransitionSet::rewards)
      .def_readonly("trajectory_id", &TransitionSet::trajectory_id)
      .def_readonly("stats", &TransitionSet::stats)
      .def("__len__", &TransitionSet::size);
  m.def("build_transition_set", [](const std::vector<Trajectory>& trajs, const Surrogate& s,
                                   const OfflineDataset& ds, double a_max, double eps) {
    return build_transition_set(trajs, s, ds, ActionBound{a_max}, eps);
  }, py::arg("trajectories"), py::arg("surrogate"), py::arg("ds"), py::arg("a_max") = 0.05,
        py::arg("grad_eps") = kDefaultGradEps);
  m.def("transition_batch", &transition_batch);
  m.def("derive_seed", &derive_seed);

  py::class_<CqlConfig>(m, "CqlConfig")
      .def(py::init<>())
      .def_readwrite("epochs", &CqlConfig::epochs)
      .def_readwrite("steps_per_epoch", &CqlConfig::steps_per_epoch)
      .def_readwrite("batch_size", &CqlConfig::batch_size)
      .def_readwrite("gamma", &CqlConfig::gamma)
      .def_readwrite("w_cons", &CqlConfig::w_cons)
      .def_readwrite("sampled_actions", &CqlConfig::sampled_actions)
      .def_readwrite("checkpoint_interval", &CqlConfig::checkpoint_interval)
      .def_readwrite("hidden_width", &CqlConfig::hidden_width)
      .def_readwrite("hidden_layers", &CqlConfig::hidden_layers);
  py::class_<Agent>(m, "Agent")
      .def_property_readonly("temperature", &Agent::temperature)
      .def("act", [](const Agent& a, const Matrix& x) { return policy_act_batch(a, x, true); })
      .def("critic_values", &critic_values)
      .def("__eq__", [](const Agent& a, const Agent& b) { return a == b; });
  py::class_<TrainResult>(m, "TrainResult")
      .def_readonly("agent", &TrainResult::agent)
      .def_readonly("aborted", &TrainResult::aborted)
      .def_property_readonly("checkpoint_epochs", [](const TrainResult& r) {
        std::vector<int> e;
        for (const auto& c : r.checkpoints) e.push_back(c.epoch);
        return e;
      });
  m.def("cql_train", &cql_train, py::call_guard<py::gil_scoped_release>());
  m.def("sac_train", &sac_train, py::call_guard<py::gil_scoped_release>());
  m.def("save_agent", &save_agent, py::arg("agent"), py::arg("path"), py::arg("config_hash") = "");
  m.def("load_agent", &load_agent);

  py::class_<BatchSearch>(m, "BatchSearch")
      .def_property_readonly("final_states", &BatchSearch::final_states)
      .def_readonly("values", &BatchSearch::values)
      .def_readonly("action_norms", &BatchSearch::action_norms)
      .def("mean_action_norms", &BatchSearch::mean_action_norms);
  m.def("pick_starts", &pick_starts, py::arg("ds"), py::arg("N") = kDefaultNumStarts);
  m.def("pgs_search", &pgs_search_batch);
  m.def("grad_baseline", &grad_baseline_batch, py::arg("starts"), py::arg("surrogate"), py::arg("T"),
        py::arg("eta") = kDefaultGradStep);
  m.def("evaluate_candidates", [](const Task& t, const OfflineDataset& ds, const Matrix& x) {
    const CandidateScores s = evaluate_candidates(t, ds, x);
    return py::make_tuple(s.score100, s.score50);
  });

  m.def("spearman", &spearman);

  py::class_<RunConfig>(m, "RunConfig")
      .def(py::init<>())
      .def_static("parse", [](const std::string& text) { return parse_config(text); })
      .def("set", &set_config_value)
      .def("get", &get_config_value)
      .def("validate", &RunConfig::validate)
      .def("hash", &RunConfig::hash)
      .def("render", &render_config);
  py::class_<Report>(m, "Report")
      .def_readonly("task", &Report::task)
      .def_readonly("method", &Report::method)
      .def_readonly("p", &Report::p)
      .def_readonly("seed", &Report::seed)
      .def_readonly("score100", &Report::score100)
      .def_readonly("score50", &Report::score50)
      .def_readonly("d_best", &Report::d_best)
      .def_readonly("action_norm_trace", &Report::action_norm_trace);
  py::class_<ExperimentResult>(m, "ExperimentResult")
      .def_readonly("reports", &ExperimentResult::reports)
      .def_readonly("aggregates", &ExperimentResult::aggregates)
      .def("csv", [](const ExperimentResult& r, const std::string& hash) { return results_csv(r, hash, false); });
  m.def("run_experiment", [](const RunConfig& cfg) { return run_experiment(cfg); },
        py::call_guard<py::gil_scoped_release>());
  m.def("report_table", [](const std::string& csv) { return report_table(parse_results_csv(csv)); });
}
