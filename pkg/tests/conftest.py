import numpy as np
import pytest

from agnsim.models import Batch

FD_STEP = 1e-5
FD_REL_TOL = 1e-4
FD_FLOOR = 1e-5


def central_differences(model, params, batch, h=FD_STEP):
    grad = np.zeros_like(params)
    for i in range(len(params)):
        e = np.zeros_like(params)
        e[i] = h
        grad[i] = (model.loss(params + e, batch) - model.loss(params - e, batch)) / (2 * h)
    return grad


def fd_relative_error(analytic, numeric):
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), FD_FLOOR)
    return np.abs(analytic - numeric) / denom


def logistic_gd_oracle(inputs, targets, eta=0.5, steps=20000):
    """Full-batch gradient descent written independently of the package."""
    inputs = [list(map(float, x)) for x in inputs]
    targets = [float(y) for y in targets]
    d = len(inputs[0])
    w = [0.0] * (d + 1)
    m = len(targets)
    for _ in range(steps):
        g = [0.0] * (d + 1)
        for x, y in zip(inputs, targets):
            z = sum(wi * xi for wi, xi in zip(w, x)) + w[-1]
            p = 1.0 / (1.0 + np.exp(-z))
            for i in range(d):
                g[i] += (p - y) * x[i] / m
            g[-1] += (p - y) / m
        w = [wi - eta * gi for wi, gi in zip(w, g)]
    return np.array(w)


class ConstantGradient:
    """Linear loss c . theta, so every gradient is c."""

    kind = "linear"

    def __init__(self, c):
        self.c = np.asarray(c, dtype=np.float64)
        self.dim = len(self.c)

    def loss(self, params, batch=None):
        return float(self.c @ params)

    def gradient(self, params, batch=None):
        return self.c.copy()

    def init_params(self, rng):
        return np.zeros(self.dim)


@pytest.fixture
def empty_batch():
    return Batch(np.zeros((1, 0)), np.zeros(1, dtype=np.int64))


def pytest_terminal_summary(terminalreporter):
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            if getattr(rep, "when", "call") != "call" or "test_acceptance.py::test_c" not in rep.nodeid:
                continue
            name = rep.nodeid.split("::")[-1]
            lines.append((name, "PASS" if outcome == "passed" else "FAIL", rep.duration))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, status, secs in sorted(lines):
            terminalreporter.write_line(f"{status}  {name}  ({secs:.2f}s)")
