"""Traces, evaluation, staleness statistics and temporal efficiency."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateReport
from .models import Batch


@dataclass(frozen=True)
class Trace:
    times: np.ndarray
    values: np.ndarray
    metric_name: str = "train_accuracy"

    def __post_init__(self):
        times = np.asarray(self.times, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        if times.ndim != 1 or times.shape != values.shape:
            raise ValueError("trace times and values must be 1-D and the same length")
        if len(times) == 0:
            raise ValueError("trace is empty")
        if np.any(np.diff(times) <= 0):
            raise ValueError("trace times must be strictly increasing")

    @classmethod
    def from_points(cls, points, metric_name: str = "train_accuracy") -> "Trace":
        """Build a trace from ``(time, value)`` pairs, keeping the last value per time."""
        merged: dict[float, float] = {}
        for t, v in points:
            merged[float(t)] = float(v)
        times = sorted(merged)
        return cls(np.array(times), np.array([merged[t] for t in times]), metric_name)

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class EfficiencyReport:
    m_shared: float  # minimal shared training time (not the mini-batch size)
    surface_a: float
    surface_b: float
    ratio: float


def surface(trace: Trace, upto: float, grid: np.ndarray | None = None) -> float:
    """Area under ``trace`` on ``[0, upto]``.

    The trace is linear between samples and flat before its first sample.
    Trapezoids over a grid holding every sample time are exact for it.
    """
    if grid is None:
        grid = np.union1d(trace.times, [0.0, upto])
        grid = grid[(grid >= 0.0) & (grid <= upto)]
    values = np.interp(grid, trace.times, trace.values)
    return float(np.trapezoid(values, grid))


def temporal_efficiency(a: Trace, b: Trace) -> EfficiencyReport:
    """Ratio of the areas under ``a`` and ``b`` up to their minimal shared time."""
    if np.any(a.values < 0) or np.any(b.values < 0):
        raise ValueError("temporal efficiency needs nonnegative metric values")
    m_shared = float(min(a.times[-1], b.times[-1]))
    grid = np.union1d(np.union1d(a.times, b.times), [0.0, m_shared])
    grid = grid[(grid >= 0.0) & (grid <= m_shared)]
    surface_a = surface(a, m_shared, grid)
    surface_b = surface(b, m_shared, grid)
    if not surface_b > 0:
        raise DegenerateReport(f"reference trace has zero surface on [0, {m_shared}]")
    return EfficiencyReport(m_shared, surface_a, surface_b, surface_a / surface_b)


def staleness_stats(log) -> tuple[float, dict[int, int], float]:
    """Mean staleness, staleness histogram and mean parameter distance.

    ``log`` holds server log rows or bare integer staleness values.
    """
    rows = list(log)
    if not rows:
        raise ValueError("empty log")
    taus = [r if isinstance(r, (int, np.integer)) else r.tau for r in rows]
    hist = dict(sorted(Counter(int(t) for t in taus).items()))
    mean_tau = sum(taus) / len(taus)
    dists = [r.param_distance for r in rows if not isinstance(r, (int, np.integer))]
    dists = [d for d in dists if np.isfinite(d)]
    mean_dist = float(np.mean(dists)) if dists else float("nan")
    return float(mean_tau), hist, mean_dist


def evaluate(model, params: np.ndarray, eval_set) -> tuple[float, float]:
    """Full-pass loss and accuracy on ``eval_set``; accuracy is nan for regressors."""
    if len(eval_set) == 0:
        raise ValueError("empty evaluation set")
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        batch = Batch(eval_set.inputs, eval_set.targets)
        loss = model.loss(params, batch)
        if not hasattr(model, "predict"):
            return loss, float("nan")
        pred = model.predict(params, eval_set.inputs)
    return loss, float(np.mean(pred == eval_set.targets))
