"""Staleness- and accumulation-induced divergence on a noisy 2-D quadratic.

An instance is a diagonal quadratic ``diag(1, kappa)`` started at ``start``
and optimized by plain SGD with step ``eta`` under additive Gaussian
gradient noise. It is a showcase when, at a fixed commit budget:

* downpour with ``n_small`` workers brings the loss below a tenth of its start,
* downpour with ``n_large`` workers trips the divergence flag,
* accumulated downpour with ``lam`` local steps (``n_small`` workers) diverges,
* agn with the same ``lam`` and ``n_small`` converges.

:func:`search` scans a fixed grid in order and returns the first showcase.
"""
from __future__ import annotations

import dataclasses
import itertools
import json
from dataclasses import dataclass
from pathlib import Path

from .optim import StrategyConfig
from .sim import DataSpec, ExperimentConfig, ModelSpec, OptimizerSpec, run


@dataclass(frozen=True)
class DivergenceInstance:
    kappa: float
    eta: float
    noise: float
    seed: int
    start: tuple = (1.0, 1.0)
    n_small: int = 10
    n_large: int = 20
    lam: int = 20
    max_commits: int = 3000

    def config(self, strategy: str, n: int, lam: int = 1) -> ExperimentConfig:
        return ExperimentConfig(
            seed=self.seed,
            n=n,
            epochs=10**9,  # paced by max_commits
            model=ModelSpec(kind="quadratic", diag=(1.0, self.kappa), start=tuple(self.start)),
            data=DataSpec(kind="none", count=100 * n),
            optimizer=OptimizerSpec(kind="sgd", eta=self.eta, batch_size=1),
            strategy=StrategyConfig(strategy, lam),
            eval_every=10,
            max_commits=self.max_commits,
            gradient_noise=self.noise,
        )

    def scenarios(self) -> dict[str, ExperimentConfig]:
        return {
            "downpour_small": self.config("downpour", self.n_small),
            "downpour_large": self.config("downpour", self.n_large),
            "accumulated": self.config("downpour-accumulated", self.n_small, self.lam),
            "agn": self.config("agn", self.n_small, self.lam),
        }


def converged(result, factor: float = 0.1) -> bool:
    initial = result.rows[0].train_loss
    final = result.final_metrics()[0]
    return not result.diverged and final < factor * initial


def outcomes(instance: DivergenceInstance) -> dict[str, object]:
    results = {name: run(cfg) for name, cfg in instance.scenarios().items()}
    return {
        "downpour_small_converges": converged(results["downpour_small"]),
        "downpour_large_diverges": results["downpour_large"].diverged,
        "accumulated_diverges": results["accumulated"].diverged,
        "agn_converges": converged(results["agn"]),
        "results": results,
    }


def is_showcase(instance: DivergenceInstance) -> bool:
    out = outcomes(instance)
    return all(v for k, v in out.items() if k != "results")


def search(kappas=(25.0, 50.0, 100.0), etas=None, noises=(0.01, 0.05, 0.1), seeds=(0, 1, 2)):
    """Return the first showcase instance on the grid, or ``None``."""
    for kappa, noise, seed in itertools.product(kappas, noises, seeds):
        # step sizes spanning the stable-at-tau=9 / unstable-at-tau=19 band of the stiff axis
        grid = etas if etas is not None else [h / kappa for h in (0.08, 0.1, 0.12, 0.14, 0.16)]
        for eta in grid:
            inst = DivergenceInstance(kappa=kappa, eta=eta, noise=noise, seed=seed)
            if is_showcase(inst):
                return inst
    return None


def save(instance: DivergenceInstance, path) -> None:
    Path(path).write_text(json.dumps(dataclasses.asdict(instance), indent=2, sort_keys=True) + "\n")


def load(path) -> DivergenceInstance:
    d = json.loads(Path(path).read_text())
    d["start"] = tuple(d["start"])
    return DivergenceInstance(**d)
