import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from agnsim.data import Dataset
from agnsim.errors import DegenerateReport
from agnsim.metrics import Trace, evaluate, staleness_stats, surface, temporal_efficiency
from agnsim.models import LogisticRegression, Quadratic
from agnsim.server import LogRow

from conftest import logistic_gd_oracle


def trace(times, values):
    return Trace(np.array(times, dtype=float), np.array(values, dtype=float))


def test_identical_traces():
    a = trace([0, 1, 2, 5], [0.1, 0.4, 0.6, 0.9])
    assert temporal_efficiency(a, a).ratio == 1.0


def test_constant_traces():
    r = temporal_efficiency(trace([0, 10], [0.8, 0.8]), trace([0, 10], [0.4, 0.4]))
    assert r.ratio == pytest.approx(2.0, rel=0, abs=1e-12)


def test_shared_time_truncation():
    a = trace([0, 10], [0.0, 1.0])
    b = trace([0, 20], [0.5, 0.5])
    r = temporal_efficiency(a, b)
    assert r.m_shared == 10.0
    assert r.surface_a == pytest.approx(5.0, abs=1e-12)
    assert r.surface_b == pytest.approx(5.0, abs=1e-12)
    assert r.ratio == pytest.approx(1.0, abs=1e-12)


def test_flat_before_first_sample():
    # 0.5 held on [0, 2], then linear 0.5 -> 1.0 on [2, 4]
    assert surface(trace([2, 4], [0.5, 1.0]), 4.0) == pytest.approx(1.0 + 1.5, abs=1e-12)


def test_interpolates_at_cut():
    # cut at t=3 inside the segment (2, 0.5)-(4, 1.0): value 0.75 there
    a = trace([0, 2, 4], [0.5, 0.5, 1.0])
    b = trace([0, 3], [1.0, 1.0])
    r = temporal_efficiency(a, b)
    assert r.surface_a == pytest.approx(1.0 + 0.5 * (0.5 + 0.75), abs=1e-12)
    assert r.ratio == pytest.approx(1.625 / 3.0, abs=1e-12)


def test_zero_denominator():
    with pytest.raises(DegenerateReport):
        temporal_efficiency(trace([0, 1], [1, 1]), trace([0, 1], [0, 0]))


def test_trace_validation():
    with pytest.raises(ValueError):
        trace([0, 1, 1], [0, 0, 0])
    with pytest.raises(ValueError):
        trace([], [])
    t = Trace.from_points([(0, 0.1), (1, 0.2), (1, 0.3), (2, 0.4)])
    np.testing.assert_array_equal(t.values, [0.1, 0.3, 0.4])


def piecewise(draw_times, draw_values):
    times = np.cumsum(np.asarray(draw_times, dtype=float))
    return Trace(times, np.asarray(draw_values, dtype=float))


trace_strategy = st.integers(2, 12).flatmap(lambda k: st.builds(
    piecewise,
    st.lists(st.floats(0.01, 10.0), min_size=k, max_size=k),
    st.lists(st.floats(0.01, 1.0), min_size=k, max_size=k),
))


@settings(max_examples=100)
@given(trace_strategy, trace_strategy)
def test_efficiency_properties(a, b):
    assert temporal_efficiency(a, a).ratio == 1.0
    ab = temporal_efficiency(a, b).ratio
    ba = temporal_efficiency(b, a).ratio
    assert abs(ab * ba - 1.0) < 1e-12
    longer, shorter = (a, b) if a.times[-1] >= b.times[-1] else (b, a)
    extended = Trace(np.append(longer.times, longer.times[-1] + [1.0, 2.5]),
                     np.append(longer.values, [0.3, 0.9]))
    assert temporal_efficiency(extended, shorter).ratio == temporal_efficiency(longer, shorter).ratio


def analytic_piecewise_area(times, values, upto):
    """Exact area by summing closed-form segment integrals (no trapezoid call)."""
    area = values[0] * min(max(times[0], 0.0), upto)  # flat hold before the first sample
    for (t0, v0), (t1, v1) in zip(zip(times, values), zip(times[1:], values[1:])):
        if t0 >= upto:
            break
        hi = min(t1, upto)
        slope = (v1 - v0) / (t1 - t0)
        area += v0 * (hi - t0) + 0.5 * slope * (hi - t0) ** 2
    return area


@settings(max_examples=100)
@given(trace_strategy, st.floats(0.1, 1.0))
def test_surface_matches_analytic(a, frac):
    upto = float(a.times[-1] * frac)
    assert surface(a, upto) == pytest.approx(analytic_piecewise_area(a.times, a.values, upto), rel=1e-12, abs=1e-12)


def test_staleness_hand_built():
    mean, hist, _ = staleness_stats([0, 1, 1, 2])
    assert mean == 1.0
    assert hist == {0: 1, 1: 2, 2: 1}


def test_staleness_all_fresh():
    rows = [LogRow(i, 0, 0, 1.0, 1.0, 0.5, 1.0) for i in range(5)]
    mean, hist, dist = staleness_stats(rows)
    assert mean == 0 and hist == {0: 5} and dist == 0.5


def test_staleness_empty_log():
    with pytest.raises(ValueError):
        staleness_stats([])


def test_evaluate_perfect_and_constant_predictors():
    xs = np.linspace(-1, 1, 10)[:, None]
    ys = (xs[:, 0] > 0).astype(np.int64)
    ds = Dataset(xs, ys)
    model = LogisticRegression(1)
    assert evaluate(model, np.array([50.0, 0.0]), ds)[1] == 1.0
    # constant predictor: weight 0, positive bias -> always class 1 on a balanced set
    assert evaluate(model, np.array([0.0, 1.0]), ds)[1] == 0.5


def test_evaluate_converged_logistic_regression():
    from agnsim.data import gen_synthetic
    ds = gen_synthetic("two-gaussians", 60, 0.0, seed=4)
    w = logistic_gd_oracle(ds.inputs, ds.targets, eta=0.5, steps=300)
    loss, acc = evaluate(LogisticRegression(2), w, ds)
    assert acc == 1.0 and loss < 0.05


def test_evaluate_regressor_has_no_accuracy():
    ds = Dataset(np.zeros((3, 0)), np.zeros(3, dtype=np.int64))
    loss, acc = evaluate(Quadratic(np.eye(2)), np.ones(2), ds)
    assert loss == 1.0 and np.isnan(acc)
