"""Deterministic discrete-event simulation of asynchronous workers.

Each worker alternates pull -> local round -> commit. A round's duration
comes from the delay model; events are ordered by ``(time, worker id)``.
The round is computed as soon as the worker pulls, which is equivalent to
computing it at completion time since its inputs are fixed by the pull.
"""
from __future__ import annotations

import csv
import dataclasses
import heapq
import io
import math
from dataclasses import dataclass, field

import numpy as np

from . import data as data_mod
from .errors import ConfigError, NumericalFault
from .metrics import Trace, evaluate, staleness_stats
from .models import MLP, LogisticRegression, Quadratic
from .optim import ROUNDS, StrategyConfig, WorkerState, make_optimizer
from .server import LogRow, ParameterServer

TRACE_COLUMNS = ("commit_index", "sim_time", "train_loss", "train_accuracy", "tau", "delta_norm", "param_distance")

# rng stream tags, one per consumer of the run seed
_INIT, _EVAL, _DELAY, _NOISE, _SUBSET = 1, 2, 3, 4, 5


@dataclass(frozen=True)
class DelayModel:
    kind: str = "homogeneous"
    base_round_time: float = 1.0
    jitter: float = 0.0

    def __post_init__(self):
        if self.kind not in ("homogeneous", "heterogeneous"):
            raise ConfigError(f"unknown delay model {self.kind!r}")
        if not self.base_round_time > 0:
            raise ConfigError("base_round_time must be positive")
        if self.kind == "homogeneous" and self.jitter != 0:
            raise ConfigError("homogeneous delays cannot have jitter")
        if not 0 <= self.jitter < 1:
            raise ConfigError("jitter must lie in [0, 1)")


def duration(delay: DelayModel, lam: int, rng: np.random.Generator | None = None) -> float:
    """Sim-time taken by a round of ``lam`` local steps."""
    if lam < 1:
        raise ValueError("a round has at least one step")
    base = delay.base_round_time * lam
    if delay.kind == "homogeneous":
        return base
    u = rng.uniform(-delay.jitter, delay.jitter) if delay.jitter > 0 else 0.0
    return base * (1.0 + u)


@dataclass(frozen=True)
class ModelSpec:
    kind: str = "logistic-regression"
    hidden: tuple = (64, 64)
    activation: str = "tanh"
    # quadratic only: either the diagonal or the full matrix
    diag: tuple | None = None
    matrix: tuple | None = None
    optimum: tuple | None = None
    start: tuple | None = None


@dataclass(frozen=True)
class DataSpec:
    kind: str = "two-gaussians"  # two-gaussians | two-moons | idx | none
    count: int = 1000  # for idx: size of the seeded subset, 0 keeps everything
    noise: float = 0.1
    images: str | None = None
    labels: str | None = None
    seed: int | None = None  # defaults to the run seed


@dataclass(frozen=True)
class OptimizerSpec:
    kind: str = "sgd"
    eta: float = 0.1
    batch_size: int = 32
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int
    n: int = 1
    epochs: int = 1
    model: ModelSpec = field(default_factory=ModelSpec)
    data: DataSpec = field(default_factory=DataSpec)
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    strategy: StrategyConfig = field(default_factory=StrategyConfig)
    delay: DelayModel = field(default_factory=DelayModel)
    eval_every: int = 1
    eval_size: int = 1024
    max_commits: int | None = None
    gradient_noise: float = 0.0
    divergence_norm: float = 1e12
    bailout_evals: int = 10

    def validate(self) -> None:
        if self.seed is None:
            raise ConfigError("seed required")
        for name in ("n", "epochs", "eval_every", "eval_size", "bailout_evals"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.max_commits is not None and self.max_commits < 1:
            raise ConfigError("max_commits must be positive when set")
        if self.gradient_noise < 0:
            raise ConfigError("gradient_noise must be nonnegative")
        if self.optimizer.kind not in ("sgd", "adam"):
            raise ConfigError(f"unknown local optimizer {self.optimizer.kind!r}")
        if not self.optimizer.eta > 0:
            raise ConfigError("optimizer eta must be positive")
        if self.optimizer.batch_size < 1:
            raise ConfigError("batch_size must be positive")
        if self.model.kind not in ("quadratic", "logistic-regression", "mlp"):
            raise ConfigError(f"unknown model kind {self.model.kind!r}")
        if self.model.kind == "quadratic" and (self.model.diag is None) == (self.model.matrix is None):
            raise ConfigError("quadratic model needs exactly one of diag or matrix")
        if self.model.kind != "quadratic" and self.data.kind == "none":
            raise ConfigError(f"{self.model.kind} needs a dataset")
        if self.data.kind == "idx" and not (self.data.images and self.data.labels):
            raise ConfigError("idx data needs images and labels paths")
        if self.data.kind not in ("two-gaussians", "two-moons", "idx", "none"):
            raise ConfigError(f"unknown data kind {self.data.kind!r}")

    def to_dict(self) -> dict:
        return _plain(dataclasses.asdict(self))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        nested = {"model": ModelSpec, "data": DataSpec, "optimizer": OptimizerSpec,
                  "strategy": StrategyConfig, "delay": DelayModel}
        for key, typ in nested.items():
            if key in d:
                d[key] = typ(**_tuples(d[key]))
        return cls(**d)


def _plain(obj):
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    return obj


def _tuples(d: dict) -> dict:
    def conv(v):
        return tuple(conv(x) for x in v) if isinstance(v, list) else v
    return {k: conv(v) for k, v in d.items()}


def build_dataset(config: ExperimentConfig):
    spec = config.data
    seed = config.seed if spec.seed is None else spec.seed
    if spec.kind == "none":
        return data_mod.placeholder(spec.count)
    if spec.kind == "idx":
        ds = data_mod.load_idx(spec.images, spec.labels)
        if 0 < spec.count < len(ds):
            idx = np.random.default_rng([seed, _SUBSET]).choice(len(ds), size=spec.count, replace=False)
            ds = ds.subset(np.sort(idx))
        return ds
    return data_mod.gen_synthetic(spec.kind, spec.count, spec.noise, seed)


def build_model(config: ExperimentConfig, dataset):
    spec = config.model
    if spec.kind == "quadratic":
        if spec.diag is not None:
            return Quadratic.diagonal(spec.diag, spec.optimum, spec.start)
        return Quadratic(spec.matrix, spec.optimum, spec.start)
    if spec.kind == "logistic-regression":
        if dataset.n_classes > 2:
            raise ConfigError("logistic regression is binary; use mlp for more classes")
        return LogisticRegression(dataset.n_features)
    n_out = 1 if dataset.n_classes <= 2 else dataset.n_classes
    return MLP([dataset.n_features, *spec.hidden, n_out], spec.activation)


@dataclass
class TraceRow:
    commit_index: int
    sim_time: float
    train_loss: float | None = None
    train_accuracy: float | None = None
    tau: int | None = None
    delta_norm: float | None = None
    param_distance: float | None = None


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


@dataclass
class RunResult:
    config: ExperimentConfig
    rows: list[TraceRow]
    log: list[LogRow]
    final_params: np.ndarray
    diverged: bool
    halt_reason: str
    commits: int
    sim_time: float

    def trace(self, metric: str = "train_accuracy") -> Trace:
        points = [(r.sim_time, getattr(r, metric)) for r in self.rows if getattr(r, metric) is not None]
        return Trace.from_points(points, metric)

    def staleness(self):
        return staleness_stats(self.log) if self.log else (float("nan"), {}, float("nan"))

    def final_metrics(self) -> tuple[float, float]:
        for r in reversed(self.rows):
            if r.train_loss is not None:
                return r.train_loss, r.train_accuracy
        return float("nan"), float("nan")

    def csv_text(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(TRACE_COLUMNS)
        for r in self.rows:
            writer.writerow([_fmt(getattr(r, c)) for c in TRACE_COLUMNS])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())


def eval_subset(config: ExperimentConfig, dataset):
    if len(dataset) <= config.eval_size:
        return dataset
    idx = np.random.default_rng([config.seed, _EVAL]).choice(len(dataset), size=config.eval_size, replace=False)
    return dataset.subset(np.sort(idx))


def make_workers(config: ExperimentConfig, model, dataset, theta0: np.ndarray) -> list[WorkerState]:
    shards = data_mod.shard(dataset, config.n, config.seed, config.epochs)
    smallest = min(len(s) for s in shards)
    if config.optimizer.batch_size > smallest:
        raise ConfigError(f"batch_size {config.optimizer.batch_size} exceeds smallest shard ({smallest} samples)")
    o = config.optimizer
    workers = []
    for k, s in enumerate(shards):
        workers.append(WorkerState(
            id=k,
            params=theta0.copy(),
            opt=make_optimizer(o.kind, o.eta, model.dim, o.beta1, o.beta2, o.eps),
            shard=s,
            batch_size=o.batch_size,
            lam=config.strategy.lam,
            rho=config.strategy.rho,
            gradient_noise=config.gradient_noise,
            noise_rng=np.random.default_rng([config.seed, _NOISE, k]),
        ))
    return workers


def run(config: ExperimentConfig, on_commit=None) -> RunResult:
    """Simulate one experiment. Identical configs give bit-identical results.

    ``on_commit(commit, tau, server)`` is called after every applied commit.
    """
    config.validate()
    dataset = build_dataset(config)
    model = build_model(config, dataset)
    eval_set = eval_subset(config, dataset)
    theta0 = model.init_params(np.random.default_rng([config.seed, _INIT]))
    server = ParameterServer(theta0, config.divergence_norm)
    workers = make_workers(config, model, dataset, theta0)
    strategy = config.strategy.name
    round_fn = ROUNDS[strategy]
    delay_rng = np.random.default_rng([config.seed, _DELAY])

    queue: list[tuple[float, int]] = []
    pending = {}

    def schedule(w: WorkerState, now: float) -> None:
        commit = round_fn(w, model, server.pull())
        if commit is not None:
            pending[w.id] = commit
            heapq.heappush(queue, (now + duration(config.delay, commit.steps, delay_rng), w.id))

    rows = []
    bad_evals = 0

    def record(row: TraceRow) -> None:
        nonlocal bad_evals
        row.train_loss, row.train_accuracy = evaluate(model, server.params, eval_set)
        bad_evals = 0 if math.isfinite(row.train_loss) else bad_evals + 1

    first = TraceRow(0, 0.0)
    record(first)
    rows.append(first)

    halt = "completed"
    now = 0.0
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            for w in workers:
                schedule(w, 0.0)
            while queue:
                now, k = heapq.heappop(queue)
                commit = pending.pop(k)
                tau = server.apply_commit(commit, strategy)
                if on_commit is not None:
                    on_commit(commit, tau, server)
                entry = server.log[-1]
                row = TraceRow(server.clock, now, tau=tau, delta_norm=entry.delta_norm,
                               param_distance=entry.param_distance)
                rows.append(row)
                if server.diverged:
                    halt = "param_norm"
                    break
                if server.clock % config.eval_every == 0:
                    record(row)
                    if bad_evals >= config.bailout_evals:
                        halt = "nonfinite_loss"
                        break
                if config.max_commits is not None and server.clock >= config.max_commits:
                    halt = "max_commits"
                    break
                schedule(workers[k], now)
        except NumericalFault:
            halt = "nonfinite_gradient"
    if rows[-1].train_loss is None:
        record(rows[-1])
    diverged = halt in ("param_norm", "nonfinite_loss", "nonfinite_gradient")
    return RunResult(config, rows, server.log, server.params.copy(), diverged, halt, server.clock, now)
