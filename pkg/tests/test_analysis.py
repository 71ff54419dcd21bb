import math

import numpy as np
import pytest

from lindey.analysis import (
    InsensitivityReport,
    check_gamma_invariance,
    check_operator_invariance,
    compare_location_sets,
    count_density_vs_N,
    count_per_period,
    default_grid,
    find_insensitivity_points,
    first_minimum,
    worker_count,
)
from lindey.errors import InvalidArgument, ResolutionFailure
from lindey.estimation import Estimator, SensitivityCurve, SensitivityPoint, sweep_sensitivity
from lindey.protocol import default_config_for

CFG = default_config_for("n0", 1)


def _synthetic(t, slope, var):
    pts = []
    for ti, d, v in zip(t, slope, var):
        s = math.sqrt(v) / abs(d) if d != 0 else math.inf
        pts.append(SensitivityPoint(float(ti), 0.0, float(v), float(d), s, 1.0, 1.0, d == 0))
    return SensitivityCurve(CFG, Estimator.IMBALANCE, pts)


def _n1_curve(gamma, t, omega=0.5):
    slope = -t * np.exp(-gamma * t / 2) * np.sin(omega * t)
    var = 1 - np.exp(-gamma * t) * np.cos(omega * t) ** 2
    return _synthetic(t, slope, var)


def test_finds_n1_lattice_on_closed_form_curve():
    rep = find_insensitivity_points(_n1_curve(0.05, default_grid(0.5, 20.0)))
    assert np.allclose(rep.locations, [2 * math.pi, 4 * math.pi, 6 * math.pi], atol=1e-6)
    assert rep.method["accuracy"] == pytest.approx(0.02 / 8)


def test_noiseless_removable_zeros_are_not_divergences():
    # at gamma = 0 spread and slope vanish together and the ratio stays 1/T
    rep = find_insensitivity_points(_n1_curve(0.0, default_grid(0.5, 20.0)))
    assert rep.locations == ()


def test_touching_zero_is_found():
    t = default_grid(0.5, 6.0)
    slope = (t - 3.0) ** 2 + 0.0  # touches zero without changing sign
    rep = find_insensitivity_points(_synthetic(t, slope, np.ones_like(t)))
    assert len(rep.locations) == 1 and rep.locations[0] == pytest.approx(3.0, abs=1e-4)


def test_threshold_filters_weak_poles():
    t = default_grid(0.5, 6.0)
    slope = np.sin(2 * t)
    curve = _synthetic(t, slope, np.ones_like(t))
    assert len(find_insensitivity_points(curve).locations) == 3
    assert find_insensitivity_points(curve, threshold=1e9).locations == ()


def test_close_poles_raise_resolution_failure():
    t = default_grid(0.5, 3.0, 0.1)
    slope = (t - 1.51) * (t - 1.62)
    with pytest.raises(ResolutionFailure) as err:
        find_insensitivity_points(_synthetic(t, slope, np.ones_like(t)))
    assert err.value.suggested_step == pytest.approx(0.025)


def test_dead_signal_is_not_resolved():
    t = default_grid(0.5, 40.0, 0.05)
    slope = np.exp(-t / 2) * np.sin(2 * t)
    rep = find_insensitivity_points(_synthetic(t, slope, np.ones_like(t)))
    assert 25 < rep.method["resolved_until"] < 30
    assert all(x <= rep.method["resolved_until"] for x in rep.locations)


def test_input_checks():
    t = np.array([1.0, 2.0, 3.0])
    with pytest.raises(InvalidArgument):
        find_insensitivity_points(_synthetic(t, [1, 2, 3], [1, 1, 1]))
    t = default_grid(0.5, 2.0)
    with pytest.raises(InvalidArgument):
        find_insensitivity_points(_synthetic(t, np.zeros_like(t) + 1e-12, np.ones_like(t)))
    with pytest.raises(InvalidArgument):
        InsensitivityReport((2.0, 1.0), None)


def test_count_per_period():
    locs = [math.pi, 1.5 * math.pi, 2 * math.pi, 3 * math.pi]
    mean, windows = count_per_period(locs, 0.5, 4 * math.pi + 0.25)
    # windows (pi, 2pi], (2pi, 3pi], (3pi, 4pi], each shifted by pi/40
    assert windows == 3
    assert mean == pytest.approx(1.0)  # 1.5pi and 2pi, then 3pi, then none
    assert count_per_period(locs, 0.5, 3.0) == (None, 0)


def test_compare_location_sets():
    ok = compare_location_sets({0.01: [1.0, 2.0], 0.05: [1.001, 2.0]}, 0.005)
    assert ok and ok.max_shift == pytest.approx(0.001)
    bad = compare_location_sets({0.01: [1.0], 0.05: [1.0, 2.0]}, 0.005)
    assert not bad and "1 locations" in bad.detail
    far = compare_location_sets({"a": [1.0], "b": [1.1]}, 0.005)
    assert not far.invariant


def test_worker_count(monkeypatch):
    monkeypatch.setenv("LINDEY_THREADS", "3")
    assert worker_count() == 3
    monkeypatch.setenv("LINDEY_THREADS", "0")
    assert worker_count() >= 1
    monkeypatch.setenv("LINDEY_THREADS", "many")
    with pytest.raises(InvalidArgument):
        worker_count()


def test_gamma_invariance_n1():
    grid = default_grid(0.5, 14.0)
    verdict = check_gamma_invariance(CFG, [0.01, 0.05, 0.1], grid)
    assert verdict.invariant, verdict.detail
    assert all(np.allclose(v, [2 * math.pi, 4 * math.pi], atol=verdict.tolerance) for v in verdict.locations.values())
    with pytest.raises(InvalidArgument):
        check_gamma_invariance(CFG, [0.0, 0.1], grid)
    with pytest.raises(InvalidArgument):
        check_gamma_invariance(CFG, [0.1, 0.1], grid)


def test_operator_invariance_n1():
    verdict = check_operator_invariance(CFG.replace(gamma=0.05), grid=default_grid(0.5, 14.0))
    assert verdict.invariant, verdict.detail
    with pytest.raises(InvalidArgument):
        check_operator_invariance(CFG, ["sz", "sz"])


def test_density_counts_n2():
    rows = count_density_vs_N("tf", [2], gammas=(0.01,), grid=default_grid(0.5, 4 * math.pi + 0.25, 0.05))
    (row,) = rows
    assert row.per_period_count == pytest.approx(1.0)
    assert np.allclose(row.locations, [k * math.pi for k in range(1, 5)], atol=0.01)


def test_first_minimum_of_noisy_n1_curve():
    cfg = default_config_for("n0", 1, gamma=0.05)
    curve = sweep_sensitivity(cfg, default_grid(0.5, 9.0))
    t, s, crlb = first_minimum(curve)
    assert math.pi <= t < 2 * math.pi
    assert s >= crlb
    assert s == pytest.approx(float(np.min(curve.sensitivity[(curve.t > math.pi) & (curve.t < 6)])), rel=1e-4)
    assert first_minimum(curve, t_start=8.9) is None
