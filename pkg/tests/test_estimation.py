import math

import numpy as np
import pytest

from lindey.errors import DimensionMismatch, IntegrityError, InvalidArgument
from lindey.estimation import (
    Estimator,
    default_estimator,
    default_fd_step,
    moments,
    qfi_of,
    sensitivity,
    sld_qfi,
    sweep_sensitivity,
)
from lindey.protocol import default_config_for

# name, config, estimator, value from the matrix-exponential reference (tests/reference.py)
FROZEN = [
    ("n1_n0_sz", dict(n=1, input_state="n0", noise_op="sz", gamma=0.1), 3.7, "imbalance", 0.3293013438083918),
    ("n1_noon_sm", dict(n=1, input_state="noon", noise_op="s-", gamma=0.02), 7.0, "imbalance", 0.154613367625335),
    ("n2_n0_sz", dict(n=2, input_state="n0", noise_op="sz", gamma=0.05), 2.3, "imbalance", 0.3454896910112529),
    ("n2_n0_sp", dict(n=2, input_state="n0", noise_op="s+", gamma=0.05), 2.3, "imbalance", 0.3306763506828853),
    ("n2_tf_sm", dict(n=2, input_state="tf", noise_op="s-", gamma=0.05), 2.3, "parity", 0.23819037757295153),
    ("n2_noon_sp", dict(n=2, input_state="noon", noise_op="s+", gamma=0.05), 2.3, "parity", 0.23819037757295142),
    ("n3_n0_sp", dict(n=3, input_state="n0", noise_op="s+", gamma=0.05), 1.5, "imbalance", 0.4205628087999098),
    ("n4_tf_sz", dict(n=4, input_state="tf", noise_op="sz", gamma=0.03), 2.0, "parity", 0.3553928327829352),
    ("n4_noon_sm", dict(n=4, input_state="noon", noise_op="s-", gamma=0.03), 2.0, "parity", 0.15377668412437467),
    ("n2_tf_alpha", dict(n=2, input_state="tf", noise_op="alpha", gamma=0.03), 1.0, "parity", 0.5238038694344924),
    ("n4_tf_alpha", dict(n=4, input_state="tf", noise_op="alpha", gamma=0.1), 2.5, "parity", 0.25332274318187326),
]


def _cfg(d):
    d = dict(d)
    return default_config_for(d.pop("input_state"), d.pop("n"), **d)


@pytest.mark.parametrize("name,cfg,t,est,value", FROZEN, ids=[f[0] for f in FROZEN])
def test_frozen_sensitivities(name, cfg, t, est, value):
    p = sensitivity(_cfg(cfg), t)
    assert default_estimator(_cfg(cfg).input_state, _cfg(cfg).n).value == est
    assert p.sensitivity == pytest.approx(value, rel=1e-6)
    assert p.sensitivity >= p.crlb - 1e-9


def test_default_estimator():
    assert default_estimator("n0", 6) is Estimator.IMBALANCE
    assert default_estimator("noon", 1) is Estimator.IMBALANCE
    assert default_estimator("tf", 2) is Estimator.PARITY
    assert default_estimator("noon", 3) is Estimator.PARITY


def test_moments():
    obs = np.diag([1.0, -1.0])
    assert moments(np.diag([0.25, 0.75]), obs) == pytest.approx((-0.5, 0.75))
    assert moments(np.diag([1.0, 0.0]), obs)[1] == 0.0
    with pytest.raises(DimensionMismatch):
        moments(np.eye(2) / 2, np.eye(3))
    with pytest.raises(IntegrityError):
        moments(np.array([[0.5, 0.5j], [0.5j, 0.5]]), np.array([[0, 1], [1, 0]]))


def _pure_qfi(psi, dpsi):
    return 4 * (np.vdot(dpsi, dpsi).real - abs(np.vdot(psi, dpsi)) ** 2)


def test_sld_qfi_pure_state_brute_force():
    rng = np.random.default_rng(11)
    for d in (2, 3, 5):
        h = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
        h = h + h.conj().T
        psi0 = rng.normal(size=d) + 1j * rng.normal(size=d)
        psi0 /= np.linalg.norm(psi0)
        # psi(theta) = exp(-i theta h) psi0, so dpsi = -i h psi0 at theta = 0
        dpsi = -1j * h @ psi0
        rho = np.outer(psi0, psi0.conj())
        drho = np.outer(dpsi, psi0.conj()) + np.outer(psi0, dpsi.conj())
        assert sld_qfi(rho, drho) == pytest.approx(_pure_qfi(psi0, dpsi), rel=1e-9)


def test_sld_qfi_of_commuting_mixture_is_classical_fisher():
    p = np.array([0.2, 0.5, 0.3])
    dp = np.array([0.1, -0.3, 0.2])
    assert sld_qfi(np.diag(p), np.diag(dp)) == pytest.approx(np.sum(dp**2 / p))


def test_noiseless_n1_qfi_is_t_squared():
    cfg = default_config_for("n0", 1)
    assert qfi_of(cfg, 3.0) == pytest.approx(9.0, rel=1e-8)


def test_divergence_flag():
    # N=1 |1,0>: the slope vanishes at T = 2 pi
    cfg = default_config_for("n0", 1, gamma=0.05)
    # the finite-difference slope there is O(1e-8), just above the default threshold
    assert sensitivity(cfg, 2 * math.pi).sensitivity > 1e6
    p = sensitivity(cfg, 2 * math.pi, divergence_threshold=1e-6)
    assert p.divergent and math.isinf(p.sensitivity)
    assert not sensitivity(cfg, 2 * math.pi, divergence_threshold=0.0).divergent


def test_sweep_equals_pointwise_and_is_deterministic():
    cfg = default_config_for("tf", 2, noise_op="s+", gamma=0.03)
    grid = [0.5, 1.0, 1.7, 3.0]
    a = sweep_sensitivity(cfg, grid)
    b = sweep_sensitivity(cfg, grid, workers=3)
    assert a.points == b.points
    for p in a.points:
        q = sensitivity(cfg, p.t_hold)
        assert p.sensitivity == pytest.approx(q.sensitivity, rel=1e-9)
        assert p.qfi == pytest.approx(q.qfi, rel=1e-7)
    assert a.fd_step == default_fd_step(0.5) == 1e-5
    assert a.diagnostics.max_trace_drift < 1e-10
    assert list(a.t) == grid
    assert len(a) == 4


@pytest.mark.parametrize("grid", [[], [1.0, 0.5], [-1.0, 1.0], [1.0, 1.0]])
def test_sweep_rejects_bad_grid(grid):
    with pytest.raises(InvalidArgument):
        sweep_sensitivity(default_config_for("n0", 1), grid)


def test_fd_step_validation():
    with pytest.raises(InvalidArgument):
        sensitivity(default_config_for("n0", 1), 1.0, fd_step=0)
    assert default_fd_step(-3.0) == pytest.approx(3e-5)


def test_explicit_estimator_override():
    cfg = default_config_for("n0", 2, gamma=0.01)
    curve = sweep_sensitivity(cfg, [1.0, 2.0], estimator="parity")
    assert curve.estimator is Estimator.PARITY
