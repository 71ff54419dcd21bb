"""Observable moments, error-propagation sensitivity and the quantum Cramer-Rao bound."""
from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .dynamics import Diagnostics
from .errors import DimensionMismatch, IntegrityError, InvalidArgument, LindeyError
from .fock import InputState, OperatorSet
from .protocol import Interferometer, ProtocolConfig

DIVERGENCE_THRESHOLD = 1e-9
SUPPORT_CUTOFF = 1e-10


class Estimator(enum.Enum):
    IMBALANCE = "imbalance"
    PARITY = "parity"


def default_estimator(input_state: InputState | str, n: int) -> Estimator:
    """Imbalance for N0 and single-particle inputs, b-mode parity otherwise."""
    input_state = InputState(input_state)
    if input_state is InputState.N0 or n == 1:
        return Estimator.IMBALANCE
    return Estimator.PARITY


def observable(ops: OperatorSet, estimator: Estimator | str) -> np.ndarray:
    estimator = Estimator(estimator)
    return ops.n_imbalance if estimator is Estimator.IMBALANCE else ops.parity_b


def moments(rho, obs) -> tuple[float, float]:
    """Mean and variance of a Hermitian observable; roundoff-negative variances clip to 0."""
    rho = np.asarray(rho, dtype=complex)
    obs = np.asarray(obs, dtype=complex)
    if rho.shape != obs.shape or rho.ndim != 2:
        raise DimensionMismatch(f"state {rho.shape} and observable {obs.shape} differ")
    mean_c = np.trace(rho @ obs)
    if abs(mean_c.imag) > 1e-10:
        raise IntegrityError(f"expectation value has imaginary part {mean_c.imag:.3e}")
    mean = float(mean_c.real)
    # centred form: Tr(rho O^2) - mean^2 cancels catastrophically when the outcome is nearly certain
    shifted = obs - mean * np.eye(obs.shape[0])
    variance = float(np.trace(rho @ shifted @ shifted).real)
    if variance < -1e-10:
        raise IntegrityError(f"negative variance {variance:.3e}")
    return mean, max(variance, 0.0)


def sld_qfi(rho, drho, cutoff: float = SUPPORT_CUTOFF) -> float:
    """Quantum Fisher information from the spectral form of the SLD.

    F = sum_{i,j: l_i + l_j > cutoff} 2 |<i|drho|j>|^2 / (l_i + l_j)
    """
    rho = np.asarray(rho, dtype=complex)
    lam, vec = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    d = vec.conj().T @ np.asarray(drho, dtype=complex) @ vec
    denom = lam[:, None] + lam[None, :]
    keep = denom > cutoff
    return float(np.sum(2 * np.abs(d[keep]) ** 2 / denom[keep]))


@dataclass(frozen=True)
class SensitivityPoint:
    t_hold: float
    mean: float
    variance: float
    dmean_ddelta: float
    sensitivity: float
    qfi: float
    crlb: float
    divergent: bool


def _assemble(t, mean, var, dmean, qfi, threshold) -> SensitivityPoint:
    divergent = abs(dmean) < threshold
    sens = math.inf if divergent else math.sqrt(var) / abs(dmean)
    qfi = max(qfi, 0.0)
    crlb = math.inf if qfi <= 0 else 1 / math.sqrt(qfi)
    return SensitivityPoint(float(t), mean, var, float(dmean), sens, qfi, crlb, bool(divergent))


def default_fd_step(delta: float) -> float:
    return 1e-5 * max(1.0, abs(delta))


def _fd_step(cfg: ProtocolConfig, fd_step: float | None) -> float:
    h = default_fd_step(cfg.delta) if fd_step is None else float(fd_step)
    if not h > 0:
        raise InvalidArgument(f"finite-difference step must be positive, got {fd_step}")
    return h


def _branch_states(ifo: Interferometer, t_hold: float, h: float):
    """Final states at delta - h, delta, delta + h sharing the first splitter."""
    d0 = ifo.cfg.delta
    return [ifo.run(t_hold, delta=d).rho_final for d in (d0 - h, d0, d0 + h)]


def qfi_of(cfg: ProtocolConfig, t_hold: float, fd_step: float | None = None) -> float:
    h = _fd_step(cfg, fd_step)
    lo, mid, hi = _branch_states(Interferometer(cfg), t_hold, h)
    return sld_qfi(mid, (hi - lo) / (2 * h))


def sensitivity(
    cfg: ProtocolConfig,
    t_hold: float,
    estimator: Estimator | str | None = None,
    fd_step: float | None = None,
    divergence_threshold: float = DIVERGENCE_THRESHOLD,
) -> SensitivityPoint:
    """Error-propagation sensitivity with a central difference in delta."""
    h = _fd_step(cfg, fd_step)
    est = default_estimator(cfg.input_state, cfg.n) if estimator is None else Estimator(estimator)
    ifo = Interferometer(cfg)
    lo, mid, hi = _branch_states(ifo, t_hold, h)
    obs = observable(ifo.ops, est)
    mean, var = moments(mid, obs)
    dmean = (moments(hi, obs)[0] - moments(lo, obs)[0]) / (2 * h)
    qfi = sld_qfi(mid, (hi - lo) / (2 * h))
    return _assemble(t_hold, mean, var, dmean, qfi, divergence_threshold)


@dataclass
class SensitivityCurve:
    config: ProtocolConfig
    estimator: Estimator
    points: list[SensitivityPoint]
    failures: list[tuple[float, str]] = field(default_factory=list)
    diagnostics: Diagnostics = field(default_factory=Diagnostics)
    fd_step: float = 0.0
    metadata: dict = field(default_factory=dict)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(p, name) for p in self.points], dtype=float)

    @property
    def t(self) -> np.ndarray:
        return self.column("t_hold")

    @property
    def sensitivity(self) -> np.ndarray:
        return self.column("sensitivity")

    def __len__(self) -> int:
        return len(self.points)


def _validate_grid(t_grid: Sequence[float]) -> list[float]:
    grid = [float(t) for t in t_grid]
    if not grid:
        raise InvalidArgument("holding-time grid is empty")
    if grid[0] < 0 or any(b <= a for a, b in zip(grid, grid[1:])):
        raise InvalidArgument("holding-time grid must be non-negative and strictly increasing")
    return grid


def sweep_sensitivity(
    cfg: ProtocolConfig,
    t_grid: Sequence[float],
    estimator: Estimator | str | None = None,
    fd_step: float | None = None,
    divergence_threshold: float = DIVERGENCE_THRESHOLD,
    workers: int = 1,
) -> SensitivityCurve:
    """Sensitivity along a holding-time grid.

    Each of the three delta branches is one hold trajectory checkpointed at the
    grid times; ``workers > 1`` runs the branches in threads with identical
    results.
    """
    grid = _validate_grid(t_grid)
    h = _fd_step(cfg, fd_step)
    est = default_estimator(cfg.input_state, cfg.n) if estimator is None else Estimator(estimator)
    ifo = Interferometer(cfg)
    ifo.after_bs1()
    obs = observable(ifo.ops, est)

    def branch(delta):
        diag = Diagnostics()
        states, errors = [], {}
        it = ifo.final_states(grid, delta, diag)
        for t in grid:
            try:
                states.append(next(it))
            except LindeyError as exc:
                errors[t] = str(exc)
                states.append(None)
                it = _resume(ifo, grid, t, delta, diag)
        return states, errors, diag

    deltas = (cfg.delta - h, cfg.delta, cfg.delta + h)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=min(workers, 3)) as pool:
            results = list(pool.map(branch, deltas))
    else:
        results = [branch(d) for d in deltas]

    curve = SensitivityCurve(cfg, est, [], fd_step=h, metadata=dict(ifo.metadata))
    for _, _, diag in results:
        curve.diagnostics.merge(diag)
    (lo, lo_err, _), (mid, mid_err, _), (hi, hi_err, _) = results
    for k, t in enumerate(grid):
        err = mid_err.get(t) or lo_err.get(t) or hi_err.get(t)
        if err is None:
            try:
                mean, var = moments(mid[k], obs)
                dmean = (moments(hi[k], obs)[0] - moments(lo[k], obs)[0]) / (2 * h)
                qfi = sld_qfi(mid[k], (hi[k] - lo[k]) / (2 * h))
                curve.points.append(_assemble(t, mean, var, dmean, qfi, divergence_threshold))
                continue
            except LindeyError as exc:
                err = str(exc)
        curve.failures.append((t, err))
    return curve


def _resume(ifo: Interferometer, grid, failed_t, delta, diag):
    # positivity failures are reported per point; later checkpoints are recomputed from scratch
    rest = [t for t in grid if t > failed_t]

    def gen():
        for t in rest:
            yield ifo.run(t, delta=delta).rho_final

    return gen()
