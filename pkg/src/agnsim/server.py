"""Parameter server: central variable, FIFO commits, staleness bookkeeping."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .models import as_param_vector

DIVERGENCE_NORM = 1e12


@dataclass(frozen=True)
class Commit:
    worker: int
    delta: np.ndarray
    base_clock: int
    # the snapshot the worker pulled; only used for the distance diagnostic
    base_params: np.ndarray | None = None
    steps: int = 1


@dataclass(frozen=True)
class LogRow:
    commit_index: int
    worker: int
    tau: int
    delta_norm: float  # norm of the delta actually applied
    raw_delta_norm: float
    param_distance: float  # ||theta_center at apply - theta pulled||, nan if unknown
    center_norm: float


def dynsgd_scale(delta: np.ndarray, tau: int) -> np.ndarray:
    """Scale a commit down by its staleness: ``delta / (tau + 1)``."""
    if tau < 0:
        raise ValueError(f"staleness must be nonnegative, got {tau}")
    return delta / (tau + 1)


class ParameterServer:
    """Holds the central variable and applies commits one at a time.

    ``clock`` counts applied commits. The server never refuses a commit that
    makes the central variable blow up; it sets ``diverged`` instead so the
    caller can record diagnostics before halting.
    """

    def __init__(self, init_params, divergence_norm: float = DIVERGENCE_NORM):
        self.params = as_param_vector(init_params)
        self.clock = 0
        self.divergence_norm = divergence_norm
        self.diverged = False
        self.log: list[LogRow] = []

    @property
    def dim(self) -> int:
        return self.params.shape[0]

    def pull(self) -> tuple[np.ndarray, int]:
        return self.params.copy(), self.clock

    def apply_commit(self, commit: Commit, strategy: str = "agn") -> int:
        delta = commit.delta
        if delta.shape != self.params.shape:
            raise ConfigError(f"commit dimension {delta.shape} does not match server {self.params.shape}")
        if commit.base_clock > self.clock:
            raise ConfigError(f"commit base clock {commit.base_clock} is ahead of server clock {self.clock}")
        tau = self.clock - commit.base_clock
        raw_norm = float(np.linalg.norm(delta))
        if strategy == "dynsgd":
            delta = dynsgd_scale(delta, tau)
        distance = float("nan")
        if commit.base_params is not None:
            distance = float(np.linalg.norm(self.params - commit.base_params))
        with np.errstate(over="ignore", invalid="ignore"):
            self.params = self.params + delta
            center_norm = float(np.linalg.norm(self.params))
        self.clock += 1
        if not np.isfinite(center_norm) or center_norm > self.divergence_norm:
            self.diverged = True
        self.log.append(LogRow(
            commit_index=self.clock,
            worker=commit.worker,
            tau=tau,
            delta_norm=float(np.linalg.norm(delta)),
            raw_delta_norm=raw_norm,
            param_distance=distance,
            center_norm=center_norm,
        ))
        return tau


def pull(server: ParameterServer) -> tuple[np.ndarray, int]:
    return server.pull()


def apply_commit(server: ParameterServer, commit: Commit, strategy: str = "agn") -> int:
    return server.apply_commit(commit, strategy)
