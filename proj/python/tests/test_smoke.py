import numpy as np
import pytest

import pgs


def small_dataset():
    return pgs.generate_dataset(pgs.make_task("quadratic-bowl"), 500, 40.0, 3)


def test_task_and_dataset():
    task = pgs.make_task("neg-ackley")
    assert task.dim == 10
    assert task(np.zeros(10)) == pytest.approx(0.0, abs=1e-12)
    ds = small_dataset()
    assert len(ds) == 200
    assert ds.inputs.shape == (200, 5)
    assert 0.0 < pgs.d_best(ds) < 1.0
    by_name = pgs.generate_dataset("quadratic-bowl", 500, 40.0, 3)
    assert np.array_equal(by_name.inputs, ds.inputs)


def test_gradient_check():
    net = pgs.Mlp.init([4, 8, 8, 1], 7)
    assert pgs.finite_diff_check(net, np.array([0.3, -0.2, 0.5, 0.9]), 1e-5) < 1e-4


def test_pipeline_pieces():
    ds = small_dataset()
    scfg = pgs.SurrogateConfig()
    scfg.hidden_width = 16
    scfg.epochs = 3
    s = pgs.train_surrogate(ds, scfg)
    assert len(s.epoch_mse) == 4

    top = pgs.select_top_p(ds, 40.0)
    trajs = pgs.synthesize_trajectories(top, 20, 10, 1)
    trans = pgs.build_transition_set(trajs, s, ds)
    assert len(trans) == 20 * 9
    assert np.all(np.abs(trans.actions) <= 0.05)

    cfg = pgs.CqlConfig()
    cfg.epochs = 2
    cfg.steps_per_epoch = 2
    cfg.hidden_width = 8
    cfg.batch_size = 16
    cfg.checkpoint_interval = 1
    res = pgs.cql_train(trans, cfg, 5)
    assert res.checkpoint_epochs == [1, 2]
    cfg.w_cons = 0.0
    assert pgs.cql_train(trans, cfg, 5).agent == pgs.sac_train(trans, cfg, 5).agent

    starts = pgs.pick_starts(ds, 16)
    search = pgs.pgs_search(starts, s, res.agent, 5)
    lo, hi = -1.0, 1.0
    assert np.all(search.final_states >= lo) and np.all(search.final_states <= hi)
    s100, s50 = pgs.evaluate_candidates(pgs.make_task("quadratic-bowl"), ds, search.final_states)
    assert s100 >= s50


def test_config_and_experiment():
    cfg = pgs.RunConfig.parse("task=quadratic-bowl\ndataset.pool_size=500\nagent.method=grad\n"
                              "surrogate.epochs=2\nsurrogate.hidden_width=16\nrun.seeds=0,1\nsearch.N=32\n")
    cfg.validate()
    assert cfg.get("agent.method") == "grad"
    res = pgs.run_experiment(cfg)
    assert len(res.reports) == 2 and len(res.aggregates) == 1
    assert res.aggregates[0].seed == "agg"
    table = pgs.report_table(res.csv(cfg.hash()))
    assert "d_best" in table


def test_errors():
    with pytest.raises(pgs.Error):
        pgs.make_task("nope")
    with pytest.raises(pgs.InvalidArgument):
        pgs.RunConfig.parse("agent.bogus=1")
    assert pgs.report_table("") == "no results\n"
