"""YAML experiment configuration and sweep grids.

Schema (every section optional except ``sweep.seed``)::

    model:     kind, hidden, activation, diag, matrix, optimum, start
    data:      kind, count, noise, images, labels, seed
    optimizer: kind, eta, batch_size, beta1, beta2, eps
    strategy:  rho
    delay:     kind, base_round_time, jitter
    run:       epochs, eval_every, eval_size, max_commits, gradient_noise,
               divergence_norm, bailout_evals
    sweep:     n, lambda, strategy, seed, baseline, efficiency_metric

Sweep entries take a scalar or a list; the run set is their cross product.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from pathlib import Path

import yaml

from .errors import ConfigError
from .optim import STRATEGIES, StrategyConfig
from .sim import DataSpec, DelayModel, ExperimentConfig, ModelSpec, OptimizerSpec

INT, FLOAT, STR = "int", "float", "str"
INTS, FLOATS, STRS, MATRIX = "list[int]", "list[float]", "list[str]", "list[list[float]]"

SCHEMA = {
    "model": {"kind": STR, "hidden": INTS, "activation": STR, "diag": FLOATS,
              "matrix": MATRIX, "optimum": FLOATS, "start": FLOATS},
    "data": {"kind": STR, "count": INT, "noise": FLOAT, "images": STR, "labels": STR, "seed": INT},
    "optimizer": {"kind": STR, "eta": FLOAT, "batch_size": INT, "beta1": FLOAT, "beta2": FLOAT, "eps": FLOAT},
    "strategy": {"rho": FLOAT},
    "delay": {"kind": STR, "base_round_time": FLOAT, "jitter": FLOAT},
    "run": {"epochs": INT, "eval_every": INT, "eval_size": INT, "max_commits": INT,
            "gradient_noise": FLOAT, "divergence_norm": FLOAT, "bailout_evals": INT},
    "sweep": {"n": INTS, "lambda": INTS, "strategy": STRS, "seed": INTS,
              "baseline": STR, "efficiency_metric": STR},
}
METRICS = ("train_accuracy", "train_loss")


@dataclass(frozen=True)
class GridSpec:
    base: ExperimentConfig
    sweep_n: tuple = (1,)
    sweep_lambda: tuple = (1,)
    strategies: tuple = ("agn",)
    seeds: tuple = ()
    baseline: str = "aeasgd"
    efficiency_metric: str = "train_accuracy"

    def __post_init__(self):
        for name in ("sweep_n", "sweep_lambda", "strategies", "seeds"):
            if not getattr(self, name):
                raise ConfigError(f"sweep list {name} is empty" if name != "seeds" else "seed required")

    def runs(self) -> list[ExperimentConfig]:
        """Every run in the grid, ordered by (n, lambda, strategy, seed)."""
        out = []
        for n in self.sweep_n:
            for lam in self.sweep_lambda:
                for strategy in self.strategies:
                    for seed in self.seeds:
                        strat = dataclasses.replace(self.base.strategy, name=strategy, lam=lam)
                        out.append(dataclasses.replace(self.base, n=n, seed=seed, strategy=strat))
        return out

    def with_seeds(self, seeds) -> "GridSpec":
        return dataclasses.replace(self, seeds=tuple(seeds))


def _key_lines(text: str) -> dict[tuple, int]:
    lines: dict[tuple, int] = {}

    def walk(node, path):
        if isinstance(node, yaml.MappingNode):
            for k, v in node.value:
                key = path + (k.value,)
                lines[key] = k.start_mark.line + 1
                walk(v, key)

    walk(yaml.compose(text, Loader=yaml.SafeLoader), ())
    return lines


def _coerce(value, kind: str, where: str):
    def scalar(v, t):
        if t == INT:
            if isinstance(v, bool) or not isinstance(v, int):
                raise ConfigError(f"{where}: expected an integer, got {v!r}")
            return v
        if t == FLOAT:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise ConfigError(f"{where}: expected a number, got {v!r}")
            return float(v)
        if not isinstance(v, str):
            raise ConfigError(f"{where}: expected a string, got {v!r}")
        return v

    if value is None:
        return None
    if kind in (INT, FLOAT, STR):
        return scalar(value, kind)
    if kind == MATRIX:
        if not isinstance(value, list) or not all(isinstance(r, list) for r in value):
            raise ConfigError(f"{where}: expected a list of rows")
        return tuple(tuple(scalar(x, FLOAT) for x in row) for row in value)
    inner = kind[5:-1]
    if not isinstance(value, list):
        value = [value]
    return tuple(scalar(v, inner) for v in value)


def load_config_text(text: str, seed_override: int | None = None) -> GridSpec:
    try:
        raw = yaml.safe_load(text) or {}
        lines = _key_lines(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping of sections")

    sections: dict[str, dict] = {}
    for section, body in raw.items():
        line = lines.get((section,), "?")
        if section not in SCHEMA:
            raise ConfigError(f"unknown key '{section}' (line {line})")
        if body is None:
            body = {}
        if not isinstance(body, dict):
            raise ConfigError(f"section '{section}' (line {line}) must be a mapping")
        parsed = {}
        for key, value in body.items():
            kline = lines.get((section, key), "?")
            where = f"key '{section}.{key}' (line {kline})"
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key '{section}.{key}' (line {kline})")
            parsed[key] = _coerce(value, SCHEMA[section][key], where)
        sections[section] = parsed

    sweep = sections.get("sweep", {})
    seeds = (seed_override,) if seed_override is not None else sweep.get("seed")
    if not seeds:
        raise ConfigError("seed required")
    strategies = sweep.get("strategy") or ("agn",)
    for s in strategies:
        if s not in STRATEGIES:
            raise ConfigError(f"unknown strategy '{s}' in key 'sweep.strategy' (line {lines.get(('sweep', 'strategy'), '?')})")
    metric = sweep.get("efficiency_metric") or "train_accuracy"
    if metric not in METRICS:
        raise ConfigError(f"key 'sweep.efficiency_metric' must be one of {METRICS}")
    ns = sweep.get("n") or (1,)
    lams = sweep.get("lambda") or (1,)

    def drop_none(d):
        return {k: v for k, v in d.items() if v is not None}

    def build(typ, section, **extra):
        try:
            return typ(**drop_none(sections.get(section, {})), **extra)
        except ConfigError as exc:
            raise ConfigError(f"section '{section}' (line {lines.get((section,), '?')}): {exc}") from exc

    run_opts = sections.get("run", {})
    base = ExperimentConfig(
        seed=seeds[0],
        n=ns[0],
        model=build(ModelSpec, "model"),
        data=build(DataSpec, "data"),
        optimizer=build(OptimizerSpec, "optimizer"),
        strategy=build(StrategyConfig, "strategy", name=strategies[0], lam=lams[0]),
        delay=build(DelayModel, "delay"),
        **{k: v for k, v in run_opts.items() if v is not None or k == "max_commits"},
    )
    grid = GridSpec(base, ns, lams, strategies, seeds, sweep.get("baseline") or "aeasgd", metric)
    sweep_line = lines.get(("sweep",), "?")
    try:
        runs = grid.runs()
    except ConfigError as exc:
        raise ConfigError(f"section 'sweep' (line {sweep_line}): {exc}") from exc
    for cfg in runs:
        try:
            cfg.validate()
        except ConfigError as exc:
            raise ConfigError(f"run n={cfg.n} lambda={cfg.strategy.lam} strategy={cfg.strategy.name}: {exc}") from exc
    return grid


def parse_config(path, seed_override: int | None = None) -> GridSpec:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    return load_config_text(path.read_text(), seed_override)
