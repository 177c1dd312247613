import dataclasses

import numpy as np
import pytest

from agnsim.data import shard
from agnsim.errors import ConfigError
from agnsim.optim import ROUNDS, StrategyConfig, WorkerState, make_optimizer
from agnsim.sim import (
    DataSpec, DelayModel, ExperimentConfig, ModelSpec, OptimizerSpec, build_dataset, build_model,
    duration, run,
)


def logreg_config(**kw):
    base = dict(
        seed=11, n=4, epochs=2,
        data=DataSpec("two-gaussians", 240, 0.8),
        optimizer=OptimizerSpec("sgd", 0.2, 8),
        strategy=StrategyConfig("agn", 3),
        eval_every=2,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def quad_config(n, commits, **kw):
    base = dict(
        seed=0, n=n, epochs=10**6,
        model=ModelSpec("quadratic", diag=(1.0, 2.0), start=(1.0, 1.0)),
        data=DataSpec("none", count=n),
        optimizer=OptimizerSpec("sgd", 0.01, 1),
        strategy=StrategyConfig("downpour", 1),
        max_commits=commits, eval_every=commits,
    )
    base.update(kw)
    return ExperimentConfig(**base)


def test_duration_homogeneous():
    assert duration(DelayModel("homogeneous", 1.0), 15) == 15


def test_duration_heterogeneous():
    d = DelayModel("heterogeneous", 2.0, 0.0)
    assert duration(d, 15, np.random.default_rng(0)) == duration(DelayModel("homogeneous", 2.0), 15)
    j = DelayModel("heterogeneous", 1.0, 0.3)
    a = [duration(j, 5, np.random.default_rng(4)) for _ in range(3)]
    assert a[0] == a[1] == a[2]
    draws = [duration(j, 5, r) for r in [np.random.default_rng(1)] * 50]
    assert min(draws) >= 5 * 0.7 and max(draws) <= 5 * 1.3 and len(set(draws)) > 1


def test_delay_model_validation():
    with pytest.raises(ConfigError):
        DelayModel("homogeneous", 1.0, 0.2)
    with pytest.raises(ConfigError):
        DelayModel("heterogeneous", 0.0)


def test_round_robin_order_and_staleness():
    seen = []
    result = run(quad_config(4, 8), on_commit=lambda c, tau, ps: seen.append((c.worker, tau)))
    # hand simulation: all four rounds finish at t=1 (ties by id), the next four at t=2
    assert seen == [(0, 0), (1, 1), (2, 2), (3, 3), (0, 3), (1, 3), (2, 3), (3, 3)]
    assert [r.sim_time for r in result.rows[1:]] == [1.0] * 4 + [2.0] * 4


@pytest.mark.parametrize("n", [2, 3, 7])
def test_homogeneous_staleness_after_warmup(n):
    result = run(quad_config(n, 12 * n))
    taus = [r.tau for r in result.log]
    assert taus[:n] == list(range(n))
    assert set(taus[n:]) == {n - 1}


@pytest.mark.parametrize("strategy,lam", [("agn", 4), ("downpour", 1), ("downpour-accumulated", 3),
                                          ("aeasgd", 5), ("dynsgd", 2)])
def test_single_worker_equals_sequential_loop(strategy, lam):
    cfg = logreg_config(n=1, strategy=StrategyConfig(strategy, lam, rho=2.0), gradient_noise=0.05)
    traj = []
    result = run(cfg, on_commit=lambda c, tau, ps: traj.append(ps.params.copy()))
    assert all(r.tau == 0 for r in result.log)

    dataset = build_dataset(cfg)
    model = build_model(cfg, dataset)
    center = model.init_params(np.random.default_rng([cfg.seed, 1]))
    (s,) = shard(dataset, 1, cfg.seed, cfg.epochs)
    w = WorkerState(0, center.copy(), make_optimizer("sgd", 0.2, model.dim), s, 8, lam=lam, rho=2.0,
                    gradient_noise=0.05, noise_rng=np.random.default_rng([cfg.seed, 4, 0]))
    expected = []
    clock = 0
    while (c := ROUNDS[strategy](w, model, (center.copy(), clock))) is not None:
        center = center + c.delta  # tau is always 0, so dynsgd scaling is the identity
        clock += 1
        expected.append(center.copy())
    assert len(traj) == len(expected) > 0
    for got, want in zip(traj, expected):
        assert got.tobytes() == want.tobytes()


def test_run_is_deterministic():
    cfg = logreg_config(delay=DelayModel("heterogeneous", 1.0, 0.4), gradient_noise=0.1)
    a, b = run(cfg), run(cfg)
    assert a.csv_text() == b.csv_text()
    assert a.final_params.tobytes() == b.final_params.tobytes()
    assert a.log == b.log


@pytest.mark.parametrize("factor", [0.5, 2.0, 3.7])
@pytest.mark.parametrize("kind,jitter", [("homogeneous", 0.0), ("heterogeneous", 0.5)])
def test_time_scaling_keeps_commit_order(factor, kind, jitter):
    cfg = logreg_config(n=5, delay=DelayModel(kind, 1.0, jitter))
    scaled = dataclasses.replace(cfg, delay=DelayModel(kind, factor, jitter))
    a, b = run(cfg), run(scaled)
    assert [r.worker for r in a.log] == [r.worker for r in b.log]
    assert a.final_params.tobytes() == b.final_params.tobytes()


def test_heterogeneous_breaks_round_robin():
    cfg = logreg_config(n=4, epochs=4, delay=DelayModel("heterogeneous", 1.0, 0.5))
    workers = [r.worker for r in run(cfg).log]
    assert workers[:8] != [0, 1, 2, 3] * 2


def test_trace_rows_and_termination():
    result = run(logreg_config())
    assert result.halt_reason == "completed" and not result.diverged
    assert result.rows[0].commit_index == 0 and result.rows[0].sim_time == 0.0
    assert [r.commit_index for r in result.rows] == list(range(result.commits + 1))
    # 240 samples / 4 workers = 60 each, 7 batches of 8 per epoch, 2 epochs, lambda 3
    assert result.commits == 4 * 5  # rounds of 3,3,3,3,2 steps per worker
    tr = result.trace()
    assert np.all(np.diff(tr.times) > 0)
    assert result.rows[-1].train_accuracy is not None


def test_max_commits_halts():
    result = run(quad_config(3, 7))
    assert result.commits == 7 and result.halt_reason == "max_commits"


def test_divergence_halts_run():
    cfg = quad_config(2, 10_000, optimizer=OptimizerSpec("sgd", 2.5, 1), eval_every=1)
    result = run(cfg)
    assert result.diverged and result.halt_reason == "param_norm"
    assert result.commits < 10_000


def test_non_finite_loss_bailout(monkeypatch):
    import agnsim.sim as sim_mod

    calls = []

    def fake_evaluate(model, params, eval_set):
        calls.append(1)
        return (1.0, 0.5) if len(calls) <= 4 else (float("nan"), 0.0)

    monkeypatch.setattr(sim_mod, "evaluate", fake_evaluate)
    result = run(quad_config(1, 100, eval_every=1, bailout_evals=3))
    assert result.halt_reason == "nonfinite_loss" and result.diverged
    # initial eval + 3 finite commit evals, then three consecutive nan evals
    assert result.commits == 6


def test_config_errors_before_compute():
    with pytest.raises(ConfigError):
        run(logreg_config(n=1000))
    with pytest.raises(ConfigError):
        run(logreg_config(optimizer=OptimizerSpec("sgd", 0.1, 100)))
    with pytest.raises(ConfigError):
        run(logreg_config(model=ModelSpec("quadratic")))
    with pytest.raises(ConfigError):
        run(logreg_config(seed=None))
    with pytest.raises(ConfigError):
        run(logreg_config(data=DataSpec("none", 10)))


def test_manifest_round_trip():
    cfg = logreg_config(model=ModelSpec("mlp", (5, 3), "sigmoid"), delay=DelayModel("heterogeneous", 2.0, 0.1))
    again = ExperimentConfig.from_dict(cfg.to_dict())
    assert again == cfg


def test_mlp_run_improves_accuracy():
    cfg = logreg_config(model=ModelSpec("mlp", (8,), "tanh"), data=DataSpec("two-moons", 400, 0.1),
                        optimizer=OptimizerSpec("adam", 0.05, 16), epochs=5)
    result = run(cfg)
    assert result.final_metrics()[1] > result.rows[0].train_accuracy
