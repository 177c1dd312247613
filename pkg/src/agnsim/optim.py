"""Local optimizers and the per-round worker procedures.

A round starts from a pull ``(snapshot, clock)``, runs up to ``lam`` local
steps on the worker's shard and returns the :class:`Commit` to send, or
``None`` when the shard ran out before a single step was taken.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Shard
from .errors import ConfigError, NumericalFault
from .server import Commit, dynsgd_scale

STRATEGIES = ("agn", "downpour", "downpour-accumulated", "aeasgd", "dynsgd")

__all__ = [
    "SGD", "Adam", "make_optimizer", "local_step", "StrategyConfig", "WorkerState",
    "agn_round", "downpour_round", "downpour_accumulated_round", "aeasgd_round",
    "dynsgd_round", "dynsgd_scale", "ROUNDS", "STRATEGIES",
]


def _require_finite(grad: np.ndarray) -> None:
    if not np.all(np.isfinite(grad)):
        raise NumericalFault("non-finite gradient")


class SGD:
    kind = "sgd"

    def __init__(self, eta: float):
        if not eta > 0:
            raise ConfigError(f"learning rate must be positive, got {eta}")
        self.eta = eta

    def step(self, grad: np.ndarray) -> np.ndarray:
        _require_finite(grad)
        return -self.eta * grad


class Adam:
    """Adam with bias-corrected moments; ``step`` returns the update, it does not apply it."""

    kind = "adam"

    def __init__(self, eta: float, dim: int, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if not eta > 0:
            raise ConfigError(f"learning rate must be positive, got {eta}")
        self.eta = eta
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = np.zeros(dim)
        self.v = np.zeros(dim)
        self.t = 0

    def step(self, grad: np.ndarray) -> np.ndarray:
        _require_finite(grad)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * (grad * grad)
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return -self.eta * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(kind: str, eta: float, dim: int, beta1=0.9, beta2=0.999, eps=1e-8):
    if kind == "sgd":
        return SGD(eta)
    if kind == "adam":
        return Adam(eta, dim, beta1, beta2, eps)
    raise ConfigError(f"unknown local optimizer {kind!r}")


def local_step(opt, grad: np.ndarray) -> np.ndarray:
    return opt.step(grad)


@dataclass(frozen=True)
class StrategyConfig:
    name: str = "agn"
    lam: int = 1
    rho: float = 0.1

    def __post_init__(self):
        if self.name not in STRATEGIES:
            raise ConfigError(f"unknown strategy {self.name!r}")
        if int(self.lam) != self.lam or self.lam < 1:
            raise ConfigError(f"lambda must be a positive integer, got {self.lam}")
        if self.name == "downpour" and self.lam != 1:
            raise ConfigError("downpour commits after every step: lambda must be 1")
        if self.name == "aeasgd" and not self.rho > 0:
            raise ConfigError("aeasgd needs rho > 0")


@dataclass
class WorkerState:
    id: int
    params: np.ndarray
    opt: object
    shard: Shard
    batch_size: int
    lam: int = 1
    rho: float = 0.1
    gradient_noise: float = 0.0
    noise_rng: np.random.Generator | None = None
    accumulator: np.ndarray | None = None
    local_step: int = 0
    base_clock: int = 0
    pulled: np.ndarray | None = field(default=None, repr=False)
    exhausted: bool = False

    def receive(self, pull_result, reset_params: bool = True) -> None:
        snapshot, clock = pull_result
        self.pulled = snapshot.copy()
        self.base_clock = clock
        if reset_params:
            self.params = snapshot.copy()
        self.accumulator = np.zeros_like(snapshot)
        self.local_step = 0


def _explore(w: WorkerState, model, steps: int) -> int:
    """Run up to ``steps`` local updates, summing them into ``w.accumulator``."""
    for _ in range(steps):
        batch = w.shard.next_minibatch(w.batch_size)
        if batch is None:
            w.exhausted = True
            break
        grad = model.gradient(w.params, batch)
        if w.gradient_noise > 0:
            grad = grad + w.noise_rng.normal(0.0, w.gradient_noise, size=grad.shape)
        g = w.opt.step(grad)
        w.accumulator += g
        w.params += g
        w.local_step += 1
    return w.local_step


def _accumulating_round(w: WorkerState, model, pull_result, lam: int, normalize: bool) -> Commit | None:
    w.receive(pull_result)
    taken = _explore(w, model, lam)
    if taken == 0:
        return None
    # partial final rounds are averaged over the steps actually taken
    delta = w.accumulator / taken if normalize else w.accumulator.copy()
    return Commit(w.id, delta, w.base_clock, w.pulled, taken)


def agn_round(w: WorkerState, model, pull_result) -> Commit | None:
    """Take ``w.lam`` local steps from the pulled centre and commit their mean update."""
    return _accumulating_round(w, model, pull_result, w.lam, normalize=True)


def downpour_round(w: WorkerState, model, pull_result) -> Commit | None:
    return _accumulating_round(w, model, pull_result, 1, normalize=True)


def downpour_accumulated_round(w: WorkerState, model, pull_result) -> Commit | None:
    """Like :func:`agn_round` but the commit is the raw sum of the local updates."""
    return _accumulating_round(w, model, pull_result, w.lam, normalize=False)


def dynsgd_round(w: WorkerState, model, pull_result) -> Commit | None:
    # the server divides by (tau + 1) on arrival
    return _accumulating_round(w, model, pull_result, w.lam, normalize=False)


def aeasgd_round(w: WorkerState, model, pull_result) -> Commit | None:
    """Asynchronous elastic averaging round.

    The worker keeps its own variable across rounds. After ``w.lam`` local
    steps it moves toward the pulled centre by ``e = eta * rho * (theta_k -
    centre)`` and commits ``+e``, so worker plus centre is conserved.
    """
    w.receive(pull_result, reset_params=False)
    taken = _explore(w, model, w.lam)
    if taken == 0:
        return None
    elastic = w.opt.eta * w.rho * (w.params - w.pulled)
    w.params -= elastic
    return Commit(w.id, elastic, w.base_clock, w.pulled, taken)


ROUNDS = {
    "agn": agn_round,
    "downpour": downpour_round,
    "downpour-accumulated": downpour_accumulated_round,
    "aeasgd": aeasgd_round,
    "dynsgd": dynsgd_round,
}
