"""Density-matrix propagation.

Unitary stages are solved exactly by diagonalising the Hamiltonian.
Dissipative stages are integrated with classical fixed-step RK4, with the
state projected back onto Hermitian matrices after every step.

Three interchangeable engines carry out the RK4 steps; they compute the
same map and are selected by problem size:

``superop``  the RK4 step of a linear autonomous ODE is the degree-4 Taylor
             polynomial of ``dt * L``; for small dimensions that matrix is
             precomputed once and applied per step.
``block``    when the Hamiltonian preserves particle number and every jump
             operator shifts it by a fixed amount, a density matrix without
             inter-sector coherences stays block diagonal; blocks are
             integrated as a zero-padded stack.
``dense``    the generic reference form, matrix products on the full state.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .errors import DimensionMismatch, IntegrationFailure, InvalidArgument

HERMITIAN_TOL = 1e-12
POSITIVITY_FAIL = -1e-7
SUPEROP_MAX_DIM = 24
# up to this dimension n identical RK4 steps are applied as one cached matrix power
POWER_MAX_DIM = 12


@dataclass(frozen=True)
class IntegratorConfig:
    dt: float = 1e-3
    convergence_check: bool = False
    convergence_tol: float = 1e-8

    def __post_init__(self):
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise InvalidArgument(f"integrator step must be positive, got dt={self.dt}")


@dataclass(frozen=True)
class Propagator:
    u: np.ndarray
    duration: float
    basis: object = None


@dataclass
class Diagnostics:
    """Running record of integrator health, merged into run manifests."""

    max_trace_drift: float = 0.0
    min_eigenvalue: float = math.inf
    max_hermiticity_error: float = 0.0
    max_convergence_gap: float = 0.0
    steps: int = 0

    def observe(self, rho: np.ndarray, trace0: complex) -> float:
        drift = abs(np.trace(rho) - trace0)
        herm = float(np.max(np.abs(rho - rho.conj().T))) if rho.size else 0.0
        lam = float(np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))[0])
        self.max_trace_drift = max(self.max_trace_drift, float(drift))
        self.max_hermiticity_error = max(self.max_hermiticity_error, herm)
        self.min_eigenvalue = min(self.min_eigenvalue, lam)
        return lam

    def merge(self, other: "Diagnostics") -> None:
        self.max_trace_drift = max(self.max_trace_drift, other.max_trace_drift)
        self.min_eigenvalue = min(self.min_eigenvalue, other.min_eigenvalue)
        self.max_hermiticity_error = max(self.max_hermiticity_error, other.max_hermiticity_error)
        self.max_convergence_gap = max(self.max_convergence_gap, other.max_convergence_gap)
        self.steps += other.steps

    def as_dict(self) -> dict:
        return {
            "max_trace_drift": self.max_trace_drift,
            "min_eigenvalue": None if math.isinf(self.min_eigenvalue) else self.min_eigenvalue,
            "max_hermiticity_error": self.max_hermiticity_error,
            "max_convergence_gap": self.max_convergence_gap,
            "steps": self.steps,
        }


def _as_square(m, name: str) -> np.ndarray:
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DimensionMismatch(f"{name} must be a square matrix, got shape {m.shape}")
    return m


def _check_hermitian(h: np.ndarray, name: str = "Hamiltonian") -> None:
    err = float(np.max(np.abs(h - h.conj().T))) if h.size else 0.0
    if err > HERMITIAN_TOL:
        raise InvalidArgument(f"{name} is not Hermitian (max |H - H^dag| = {err:.3e})")


def unitary_propagator(h, t: float, basis=None) -> Propagator:
    """exp(-i h t) from the eigendecomposition of ``h``."""
    h = _as_square(h, "Hamiltonian")
    _check_hermitian(h)
    if t < 0:
        raise InvalidArgument("propagation time must be non-negative")
    w, v = np.linalg.eigh(0.5 * (h + h.conj().T))
    u = (v * np.exp(-1j * w * t)) @ v.conj().T
    return Propagator(u=u, duration=float(t), basis=basis)


def apply_propagator(p: Propagator, rho) -> np.ndarray:
    rho = _as_square(rho, "density matrix")
    if rho.shape != p.u.shape:
        raise DimensionMismatch(f"propagator is {p.u.shape}, state is {rho.shape}")
    out = p.u @ rho @ p.u.conj().T
    return 0.5 * (out + out.conj().T)


@dataclass(frozen=True, eq=False)
class LindbladGenerator:
    """-i[H, .] plus one dissipator gamma * (L . L^dag - {L^dag L, .}/2) per jump operator.

    ``sectors`` optionally labels every basis index with its particle number,
    enabling the block engine.
    """

    hamiltonian: np.ndarray
    jump_ops: tuple = ()
    sectors: np.ndarray | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        h = _as_square(self.hamiltonian, "Hamiltonian")
        _check_hermitian(h)
        ops = []
        for op, gamma in self.jump_ops:
            op = _as_square(op, "jump operator")
            if op.shape != h.shape:
                raise DimensionMismatch(f"jump operator {op.shape} does not match Hamiltonian {h.shape}")
            if not (gamma >= 0 and math.isfinite(gamma)):
                raise InvalidArgument(f"dissipation rates must be non-negative, got {gamma}")
            ops.append((op, float(gamma)))
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "jump_ops", tuple(ops))
        if self.sectors is not None:
            sec = np.asarray(self.sectors, dtype=int)
            if sec.shape != (h.shape[0],):
                raise DimensionMismatch("sector labels must match the basis dimension")
            object.__setattr__(self, "sectors", sec)

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]

    @property
    def active_ops(self) -> list[tuple[np.ndarray, float]]:
        return [(op, g) for op, g in self.jump_ops if g > 0]

    def superoperator(self) -> np.ndarray:
        """Liouvillian acting on row-major ``rho.ravel()``."""
        if "superop" not in self._cache:
            d = self.dim
            eye = np.eye(d)
            h = self.hamiltonian
            sup = -1j * (np.kron(h, eye) - np.kron(eye, h.T))
            for op, g in self.active_ops:
                k = op.conj().T @ op
                sup += g * (np.kron(op, op.conj()) - 0.5 * np.kron(k, eye) - 0.5 * np.kron(eye, k.T))
            self._cache["superop"] = sup
        return self._cache["superop"]


def lindblad_rhs(gen: LindbladGenerator, rho) -> np.ndarray:
    """d rho / dt for the generator, evaluated densely."""
    rho = _as_square(rho, "density matrix")
    if rho.shape != gen.hamiltonian.shape:
        raise DimensionMismatch(f"state {rho.shape} does not match generator {gen.hamiltonian.shape}")
    h = gen.hamiltonian
    out = -1j * (h @ rho - rho @ h)
    for op, g in gen.active_ops:
        k = op.conj().T @ op
        out += g * (op @ rho @ op.conj().T - 0.5 * (k @ rho + rho @ k))
    return out


def _hermitize(m: np.ndarray) -> np.ndarray:
    return 0.5 * (m + np.swapaxes(m, -1, -2).conj())


class _DenseEngine:
    name = "dense"

    def __init__(self, gen: LindbladGenerator):
        h = gen.hamiltonian
        self._hdiag = None
        if np.count_nonzero(h - np.diag(np.diag(h))) == 0:
            e = np.diag(h)
            self._hdiag = -1j * (e[:, None] - e[None, :])
        self._h = h
        self._ops = []
        for op, g in gen.active_ops:
            self._ops.append((np.sqrt(g) * op, g * (op.conj().T @ op)))

    def pack(self, rho):
        return np.array(rho, dtype=complex)

    def unpack(self, x):
        return x

    def rhs(self, x):
        if self._hdiag is not None:
            out = self._hdiag * x
        else:
            out = -1j * (self._h @ x - x @ self._h)
        for l, k in self._ops:
            a = l @ x
            out += a @ l.conj().T
            b = k @ x
            out -= 0.5 * (b + b.conj().T)
        return out

    def step(self, x, h):
        k1 = self.rhs(x)
        k2 = self.rhs(x + 0.5 * h * k1)
        k3 = self.rhs(x + 0.5 * h * k2)
        k4 = self.rhs(x + h * k3)
        return _hermitize(x + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))


class _SuperopEngine:
    name = "superop"

    def __init__(self, gen: LindbladGenerator):
        self._gen = gen
        self._d = gen.dim

    def _step_map(self, h: float) -> np.ndarray:
        key = ("rk4-map", float(h))
        cache = self._gen._cache
        if key not in cache:
            a = h * self._gen.superoperator()
            eye = np.eye(a.shape[0], dtype=complex)
            # Horner form of I + A + A^2/2 + A^3/6 + A^4/24
            p = eye + a / 4
            p = eye + (a / 3) @ p
            p = eye + (a / 2) @ p
            p = eye + a @ p
            cache[key] = p
        return cache[key]

    def pack(self, rho):
        return np.array(rho, dtype=complex).reshape(self._d, self._d)

    def unpack(self, x):
        return x

    def step(self, x, h):
        y = (self._step_map(h) @ x.reshape(-1)).reshape(self._d, self._d)
        return _hermitize(y)

    def advance(self, x, n: int, h: float):
        """``n`` steps of size ``h``: the same RK4 polynomial, raised to the n-th power by squaring."""
        if self._d > POWER_MAX_DIM or n < 2:
            for _ in range(n):
                x = self.step(x, h)
            return x
        key = ("rk4-power", float(h), n)
        cache = self._gen._cache
        if key not in cache:
            cache[key] = np.linalg.matrix_power(self._step_map(h), n)
        return _hermitize((cache[key] @ x.reshape(-1)).reshape(self._d, self._d))


class _BlockEngine:
    name = "block"

    def __init__(self, gen: LindbladGenerator, blocks: list[np.ndarray], shifts: list[int]):
        self._blocks = blocks
        self._sizes = [len(b) for b in blocks]
        labels = [int(gen.sectors[b[0]]) for b in blocks]
        pos = {lab: k for k, lab in enumerate(labels)}
        K, m = len(blocks), max(self._sizes)
        self._shape = (K, m, m)
        self._dim = gen.dim

        h = gen.hamiltonian
        self._hdiag = None
        if np.count_nonzero(h - np.diag(np.diag(h))) == 0:
            e = np.zeros((K, m))
            for k, idx in enumerate(blocks):
                e[k, : len(idx)] = np.diag(h)[idx].real
            self._hdiag = -1j * (e[:, :, None] - e[:, None, :])
        else:
            self._h = self._stack(h, list(range(K)), list(range(K)))

        self._ops = []
        for (op, g), shift in zip(gen.active_ops, shifts):
            src = [k for k, lab in enumerate(labels) if lab + shift in pos]
            tgt = [pos[labels[k] + shift] for k in src]
            ls = np.sqrt(g) * self._stack(op, tgt, src)
            kk = np.zeros(self._shape, dtype=complex)
            kk[src] = np.swapaxes(ls, 1, 2).conj() @ ls
            self._ops.append((np.array(src), np.array(tgt), ls, np.swapaxes(ls, 1, 2).conj().copy(), kk))

    def _stack(self, op, rows_k, cols_k):
        out = np.zeros((len(cols_k),) + self._shape[1:], dtype=complex)
        for i, (r, c) in enumerate(zip(rows_k, cols_k)):
            ri, ci = self._blocks[r], self._blocks[c]
            out[i, : len(ri), : len(ci)] = op[np.ix_(ri, ci)]
        return out

    def pack(self, rho):
        x = np.zeros(self._shape, dtype=complex)
        for k, idx in enumerate(self._blocks):
            x[k, : len(idx), : len(idx)] = rho[np.ix_(idx, idx)]
        return x

    def unpack(self, x):
        rho = np.zeros((self._dim, self._dim), dtype=complex)
        for k, idx in enumerate(self._blocks):
            rho[np.ix_(idx, idx)] = x[k, : len(idx), : len(idx)]
        return rho

    def rhs(self, x):
        if self._hdiag is not None:
            out = self._hdiag * x
        else:
            out = -1j * (self._h @ x - x @ self._h)
        for src, tgt, ls, lsh, kk in self._ops:
            out[tgt] += ls @ x[src] @ lsh
            b = kk @ x
            out -= 0.5 * (b + np.swapaxes(b, 1, 2).conj())
        return out

    step = _DenseEngine.step


def _block_structure(gen: LindbladGenerator, rho0: np.ndarray):
    """Sector index lists and per-operator shifts, or None if not block compatible."""
    sec = gen.sectors
    if sec is None:
        return None
    same = sec[:, None] == sec[None, :]
    if np.any(np.abs(gen.hamiltonian[~same]) > 0) or np.any(np.abs(rho0[~same]) > 1e-14):
        return None
    shifts = []
    for op, _ in gen.active_ops:
        rows, cols = np.nonzero(op)
        diffs = set((sec[rows] - sec[cols]).tolist())
        if len(diffs) > 1:
            return None
        shifts.append(diffs.pop() if diffs else 0)
    labels = list(dict.fromkeys(sec.tolist()))
    return [np.flatnonzero(sec == lab) for lab in labels], shifts


def _engine(gen: LindbladGenerator, rho0: np.ndarray, method: str = "auto"):
    if method == "dense":
        return _DenseEngine(gen)
    if method == "superop" or (method == "auto" and gen.dim <= SUPEROP_MAX_DIM):
        return _SuperopEngine(gen)
    if method in ("block", "auto"):
        structure = _block_structure(gen, rho0)
        if structure is not None:
            return _BlockEngine(gen, *structure)
        if method == "block":
            raise InvalidArgument("generator/state are not block diagonal in particle number")
        return _DenseEngine(gen)
    raise InvalidArgument(f"unknown integration method {method!r}")


def _split(t: float, dt: float) -> tuple[int, float]:
    n = int(math.floor(t / dt + 1e-9))
    rem = t - n * dt
    if abs(rem) <= 1e-12 * max(1.0, t):
        rem = 0.0
    if rem < 0:
        n, rem = n - 1, rem + dt
    return n, rem


def _advance(engine, x, t: float, dt: float):
    n, rem = _split(t, dt)
    if hasattr(engine, "advance"):
        x = engine.advance(x, n, dt)
    else:
        for _ in range(n):
            x = engine.step(x, dt)
    if rem > 0:
        x = engine.step(x, rem)
    return x, n + (rem > 0)


def _check_state(rho, trace0, diag: Diagnostics, t: float) -> None:
    lam = diag.observe(rho, trace0)
    if lam < POSITIVITY_FAIL:
        raise IntegrationFailure(
            f"density matrix lost positivity at t={t:.6g} (min eigenvalue {lam:.3e}); retry with a smaller dt"
        )


def trajectory_rk4(
    gen: LindbladGenerator,
    rho0,
    times: Sequence[float],
    cfg: IntegratorConfig | None = None,
    diagnostics: Diagnostics | None = None,
    method: str = "auto",
) -> Iterator[np.ndarray]:
    """Yield the RK4 state at each of the non-decreasing ``times``.

    Each segment between consecutive checkpoints is integrated with steps of
    ``dt`` and one shortened final step.
    """
    cfg = cfg or IntegratorConfig()
    diag = diagnostics if diagnostics is not None else Diagnostics()
    rho0 = _as_square(rho0, "density matrix")
    if rho0.shape != gen.hamiltonian.shape:
        raise DimensionMismatch(f"state {rho0.shape} does not match generator {gen.hamiltonian.shape}")
    times = [float(t) for t in times]
    if any(t < 0 for t in times) or any(b < a for a, b in zip(times, times[1:])):
        raise InvalidArgument("checkpoint times must be non-negative and non-decreasing")
    engine = _engine(gen, rho0, method)
    trace0 = np.trace(rho0)
    x = engine.pack(_hermitize(rho0))
    now = 0.0
    for t in times:
        x, steps = _advance(engine, x, t - now, cfg.dt)
        diag.steps += steps
        now = t
        rho = engine.unpack(x)
        _check_state(rho, trace0, diag, t)
        yield rho.copy()


def evolve_rk4(
    gen: LindbladGenerator,
    rho0,
    t: float,
    cfg: IntegratorConfig | None = None,
    diagnostics: Diagnostics | None = None,
    method: str = "auto",
) -> np.ndarray:
    """Integrate the master equation from ``rho0`` over a duration ``t``."""
    cfg = cfg or IntegratorConfig()
    if t < 0:
        raise InvalidArgument("integration time must be non-negative")
    diag = diagnostics if diagnostics is not None else Diagnostics()
    (rho,) = trajectory_rk4(gen, rho0, [t], cfg, diag, method)
    if cfg.convergence_check and t > 0:
        half = IntegratorConfig(dt=cfg.dt / 2)
        (fine,) = trajectory_rk4(gen, rho0, [t], half, Diagnostics(), method)
        gap = float(np.max(np.abs(fine - rho)))
        diag.max_convergence_gap = max(diag.max_convergence_gap, gap)
        if gap > cfg.convergence_tol:
            raise IntegrationFailure(
                f"RK4 result changed by {gap:.3e} when halving dt={cfg.dt}; reduce the step"
            )
    return rho

