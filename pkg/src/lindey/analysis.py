"""Insensitivity points, their density and noise invariance, and the N-scaling experiment."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.ndimage import maximum_filter1d
from scipy.optimize import bisect, minimize_scalar

from .errors import InvalidArgument, ResolutionFailure
from .estimation import DIVERGENCE_THRESHOLD, Estimator, SensitivityCurve, sweep_sensitivity
from .fock import InputState
from .protocol import NoiseOp, ProtocolConfig, default_config_for

DENOMINATOR_FRACTION = 1e-4
# a root of the slope is a pole of the sensitivity only if the spread there is
# not itself vanishing; "vanishing" means below this fraction of the median spread
NUMERATOR_FRACTION = 1e-3
# ... and only if the variance at the root is not a deep local dip relative to
# the grid points one step outside the bracketing interval
LOCAL_VARIANCE_FRACTION = 0.1
# below this local slope amplitude the finite difference is roundoff and its
# sign changes carry no information
SIGNAL_FLOOR = 1e-6
SIGNAL_WINDOW = 0.5
# counting windows are (k*pi + shift, (k+1)*pi + shift] so that points sitting
# exactly on multiples of pi are never split between two windows
WINDOW_SHIFT = math.pi / 40
MIN_WINDOW_START = 0.5


def default_grid(t_min: float = 0.5, t_max: float = 4 * math.pi + 0.25, step: float = 0.02) -> np.ndarray:
    """Holding-time grid used by the analysis routines."""
    return np.round(np.arange(t_min, t_max + step / 2, step), 12)


@dataclass(frozen=True)
class InvarianceVerdict:
    invariant: bool
    max_shift: float
    tolerance: float
    locations: dict = field(default_factory=dict)
    detail: str = ""

    def __bool__(self) -> bool:
        return self.invariant


@dataclass(frozen=True)
class InsensitivityReport:
    locations: tuple[float, ...]
    per_period_count: float | None
    gamma_invariant: InvarianceVerdict | None = None
    method: dict = field(default_factory=dict)

    def __post_init__(self):
        locs = tuple(float(x) for x in self.locations)
        if any(b <= a for a, b in zip(locs, locs[1:])):
            raise InvalidArgument("insensitivity locations must be strictly increasing")
        object.__setattr__(self, "locations", locs)


def count_per_period(locations: Sequence[float], t_lo: float, t_hi: float) -> tuple[float | None, int]:
    """Mean number of locations per pi-long window inside ``[t_lo, t_hi]``.

    Windows start at the first multiple of pi at or after max(t_lo, 0.5).
    Returns (mean count, number of windows); the mean is None without a full window.
    """
    k = math.ceil((max(t_lo, MIN_WINDOW_START) - WINDOW_SHIFT) / math.pi)
    k = max(k, 1)
    counts = []
    locs = np.asarray(locations, dtype=float)
    while (k + 1) * math.pi + WINDOW_SHIFT <= t_hi:
        lo, hi = k * math.pi + WINDOW_SHIFT, (k + 1) * math.pi + WINDOW_SHIFT
        counts.append(int(np.count_nonzero((locs > lo) & (locs <= hi))))
        k += 1
    if not counts:
        return None, 0
    return float(np.mean(counts)), len(counts)


def _local_sensitivity(dspl, vspl, x: float) -> float:
    d = float(dspl(x))
    if d == 0.0:
        return math.inf
    return math.sqrt(max(float(vspl(x)), 0.0)) / abs(d)


def _running_max(x: np.ndarray, half: int) -> np.ndarray:
    return maximum_filter1d(x, size=2 * half + 1, mode="nearest")


def find_insensitivity_points(
    curve: SensitivityCurve,
    threshold: float | None = None,
    denominator_fraction: float = DENOMINATOR_FRACTION,
) -> InsensitivityReport:
    """Locate the holding times where the sensitivity diverges.

    Candidates are sign changes of the slope d<O>/d(delta) between grid points
    (refined by bisection on a cubic interpolant) and touching zeros, i.e. local
    minima of |d<O>/d(delta)| below ``denominator_fraction`` times its median
    (refined by bounded minimisation). A candidate is a genuine divergence when
    the standard deviation of the estimator at the root stays above
    ``NUMERATOR_FRACTION`` of its median; otherwise numerator and denominator
    vanish together and the sensitivity stays finite. The variance at the
    root must also stay above ``LOCAL_VARIANCE_FRACTION`` of the smaller
    variance one grid step outside the bracketing interval, which separates a
    true zero of the spread from interpolation noise near it. If ``threshold`` is
    given, the interpolated sensitivity a grid-step/8 to either side must also
    exceed it.

    Where the slope envelope (running maximum of its magnitude over
    ``SIGNAL_WINDOW``) falls below ``SIGNAL_FLOOR`` the curve no longer resolves
    anything; detection stops there and ``method["resolved_until"]`` records it.
    """
    t = curve.t
    if len(t) < 4:
        raise InvalidArgument("need at least four grid points to locate divergences")
    d = curve.column("dmean_ddelta")
    var = curve.column("variance")
    step = float(np.median(np.diff(t)))
    accuracy = step / 8
    scale = float(np.median(np.abs(d)))
    if scale <= DIVERGENCE_THRESHOLD:
        raise InvalidArgument("the estimator carries no phase signal on this curve (slope is zero throughout)")
    spread_floor = NUMERATOR_FRACTION * float(np.median(np.sqrt(np.clip(var, 0, None))))

    envelope = _running_max(np.abs(d), max(1, int(round(SIGNAL_WINDOW / step))))
    live = np.flatnonzero(envelope >= SIGNAL_FLOOR)
    resolved_until = float(t[live[-1]]) if len(live) else float(t[0])

    dspl = CubicSpline(t, d)
    vspl = CubicSpline(t, var)
    candidates: list[tuple[float, str]] = []
    sign_change = np.zeros(len(t) - 1, dtype=bool)
    for k in range(len(t) - 1):
        if d[k] == 0.0:
            candidates.append((float(t[k]), "zero"))
        elif d[k] * d[k + 1] < 0:
            sign_change[k] = True
            root = bisect(lambda x: float(dspl(x)), t[k], t[k + 1], xtol=1e-12)
            candidates.append((float(root), "sign"))
    if d[-1] == 0.0:
        candidates.append((float(t[-1]), "zero"))

    ad = np.abs(d)
    floor = denominator_fraction * scale
    for k in range(1, len(t) - 1):
        if ad[k] > floor or ad[k] > ad[k - 1] or ad[k] > ad[k + 1] or d[k] == 0.0:
            continue
        if sign_change[k - 1] or sign_change[k]:
            continue
        res = minimize_scalar(lambda x: abs(float(dspl(x))), bounds=(t[k - 1], t[k + 1]), method="bounded",
                              options={"xatol": 1e-10})
        candidates.append((float(res.x), "touch"))

    kept = []
    for x, _kind in sorted(candidates):
        if x - t[0] < accuracy or t[-1] - x < accuracy or x > resolved_until:
            continue
        v_root = max(float(vspl(x)), 0.0)
        if math.sqrt(v_root) <= spread_floor:
            continue
        k = int(np.clip(np.searchsorted(t, x) - 1, 0, len(t) - 2))
        outer = var[[max(k - 1, 0), min(k + 2, len(t) - 1)]]
        if v_root < LOCAL_VARIANCE_FRACTION * float(np.min(outer)):
            continue
        if threshold is not None:
            left = _local_sensitivity(dspl, vspl, x - accuracy)
            right = _local_sensitivity(dspl, vspl, x + accuracy)
            if min(left, right) <= threshold:
                continue
        if kept and x - kept[-1] < 2 * step:
            raise ResolutionFailure(
                f"divergences at {kept[-1]:.4f} and {x:.4f} are closer than two grid steps",
                suggested_step=step / 4,
            )
        kept.append(x)

    count, windows = count_per_period(kept, float(t[0]), resolved_until)
    method = dict(
        grid_step=step,
        accuracy=accuracy,
        sensitivity_cutoff=threshold,
        spread_floor=spread_floor,
        denominator_floor=floor,
        period_windows=windows,
        window_shift=WINDOW_SHIFT,
        resolved_until=resolved_until,
    )
    return InsensitivityReport(tuple(kept), count, None, method)


def compare_location_sets(sets: dict, tolerance: float) -> InvarianceVerdict:
    """Pairwise comparison of location lists keyed by whatever was varied."""
    keys = list(sets)
    max_shift = 0.0
    problems = []
    for i, a in enumerate(keys):
        for b in keys[i + 1:]:
            la, lb = np.asarray(sets[a]), np.asarray(sets[b])
            if len(la) != len(lb):
                problems.append(f"{a}: {len(la)} locations vs {b}: {len(lb)}")
                continue
            if len(la):
                max_shift = max(max_shift, float(np.max(np.abs(la - lb))))
    if max_shift > tolerance:
        problems.append(f"largest shift {max_shift:.3e} exceeds {tolerance:.3e}")
    return InvarianceVerdict(not problems, max_shift, tolerance, {k: tuple(v) for k, v in sets.items()},
                             "; ".join(problems))


def _detect(args) -> InsensitivityReport:
    cfg, grid, estimator = args
    return find_insensitivity_points(sweep_sensitivity(cfg, grid, estimator))


def _compare_reports(labelled: dict, grid) -> InvarianceVerdict:
    """Compare location sets on the holding-time range every curve resolves."""
    horizon = min(r.method["resolved_until"] for r in labelled.values()) - SIGNAL_WINDOW
    sets = {k: [x for x in r.locations if x <= horizon] for k, r in labelled.items()}
    verdict = compare_location_sets(sets, _location_tolerance(grid))
    if horizon < float(np.max(grid)) - SIGNAL_WINDOW:
        note = f"compared on t <= {horizon:.3f} where every curve resolves a slope"
        verdict = InvarianceVerdict(verdict.invariant, verdict.max_shift, verdict.tolerance, verdict.locations,
                                    "; ".join(x for x in (verdict.detail, note) if x))
    return verdict


def worker_count() -> int:
    """Process fan-out from LINDEY_THREADS; unset or 0 means one per CPU."""
    raw = os.environ.get("LINDEY_THREADS", "0").strip() or "0"
    try:
        n = int(raw)
    except ValueError:
        raise InvalidArgument(f"LINDEY_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise InvalidArgument("LINDEY_THREADS must be >= 0")
    return n or (os.cpu_count() or 1)


def _fan_out(fn, jobs: list):
    workers = min(worker_count(), len(jobs))
    if workers <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs))


def _location_tolerance(grid) -> float:
    step = float(np.median(np.diff(np.asarray(grid, dtype=float))))
    return 2 * step / 8


def check_gamma_invariance(
    cfg_base: ProtocolConfig,
    gammas: Sequence[float],
    grid: Sequence[float] | None = None,
    estimator: Estimator | str | None = None,
) -> InvarianceVerdict:
    """Do the divergence locations stay put as the noise rate changes?"""
    distinct = sorted({float(g) for g in gammas})
    if len(distinct) < 2 or distinct[0] <= 0:
        raise InvalidArgument("need at least two distinct positive noise rates to compare")
    grid = default_grid() if grid is None else grid
    found = _fan_out(_detect, [(cfg_base.replace(gamma=g), grid, estimator) for g in distinct])
    return _compare_reports(dict(zip(distinct, found)), grid)


def check_operator_invariance(
    cfg_base: ProtocolConfig,
    ops: Sequence[NoiseOp | str] = (NoiseOp.SZ, NoiseOp.SMINUS, NoiseOp.SPLUS),
    grid: Sequence[float] | None = None,
    estimator: Estimator | str | None = None,
) -> InvarianceVerdict:
    """Same comparison as :func:`check_gamma_invariance`, varying the jump operator."""
    ops = [NoiseOp(o) for o in ops]
    if len(set(ops)) < 2:
        raise InvalidArgument("need at least two distinct noise operators to compare")
    grid = default_grid() if grid is None else grid
    found = _fan_out(_detect, [(cfg_base.replace(noise_op=o), grid, estimator) for o in ops])
    return _compare_reports({o.value: f for o, f in zip(ops, found)}, grid)


@dataclass(frozen=True)
class DensityRow:
    n: int
    gamma: float
    noise_op: NoiseOp
    per_period_count: float | None
    locations: tuple[float, ...]


def count_density_vs_N(
    input_state: InputState | str,
    n_list: Sequence[int],
    gammas: Sequence[float] = (0.0, 0.01),
    noise: NoiseOp | str = NoiseOp.SZ,
    grid: Sequence[float] | None = None,
    delta: float = 0.5,
) -> list[DensityRow]:
    """Insensitivity points per pi of holding time for each N and noise rate."""
    input_state, noise = InputState(input_state), NoiseOp(noise)
    grid = default_grid() if grid is None else grid
    cfgs = [default_config_for(input_state, n, noise_op=noise, gamma=g, delta=delta) for n in n_list for g in gammas]
    reports = _fan_out(_detect, [(c, grid, None) for c in cfgs])
    return [DensityRow(c.n, c.gamma, noise, r.per_period_count, r.locations) for c, r in zip(cfgs, reports)]


# ------------------------------------------------------------- N scaling / crossover


def _local_interp(t, y, k, half=3):
    lo, hi = max(0, k - half), min(len(t), k + half + 1)
    tt, yy = t[lo:hi], y[lo:hi]
    ok = np.isfinite(yy)
    return CubicSpline(tt[ok], yy[ok])


def first_minimum(curve: SensitivityCurve, t_start: float = math.pi) -> tuple[float, float, float] | None:
    """First local minimum of the sensitivity at or after ``t_start``.

    The grid minimum is refined by golden-section search on a local cubic
    interpolant; the bound is interpolated at the refined time. Returns
    (t_min, sensitivity, crlb) or None when the curve has no such minimum.
    """
    t, s, crlb = curve.t, curve.sensitivity, curve.column("crlb")
    for k in range(1, len(t) - 1):
        if t[k] < t_start or not np.all(np.isfinite(s[k - 1:k + 2])):
            continue
        if s[k] <= s[k - 1] and s[k] < s[k + 1]:
            spl = _local_interp(t, s, k)
            res = minimize_scalar(lambda x: float(spl(x)), bracket=(t[k - 1], t[k], t[k + 1]), method="golden",
                                  tol=1e-10)
            x = min(max(float(res.x), t_start, t[k - 1]), t[k + 1])
            return x, float(spl(x)), float(_local_interp(t, crlb, k)(x))
    return None


@dataclass(frozen=True)
class ScalingEntry:
    n: int
    t_min: float
    sensitivity_at_min: float
    crlb_at_min: float


@dataclass(frozen=True)
class ScalingResult:
    noise_op: NoiseOp
    per_n: tuple[ScalingEntry, ...]

    def __post_init__(self):
        if any(e.t_min < math.pi - 1e-12 for e in self.per_n):
            raise InvalidArgument("first minima must lie at or after pi")

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(e, name) for e in self.per_n], dtype=float)


@dataclass(frozen=True)
class CrossoverTable:
    gamma: float
    delta: float
    results: dict  # NoiseOp -> ScalingResult
    missing: tuple = ()

    def rows(self) -> list[dict]:
        out = []
        for op, res in self.results.items():
            for e in res.per_n:
                out.append(dict(n=e.n, noise_op=op.value, t_min=e.t_min,
                                sensitivity=e.sensitivity_at_min, crlb=e.crlb_at_min))
        return sorted(out, key=lambda r: (r["n"], r["noise_op"]))

    def crossing_n(self, a: NoiseOp = NoiseOp.SPLUS, b: NoiseOp = NoiseOp.ALPHA) -> int | None:
        """Smallest N at which ``b`` beats ``a`` after ``a`` led at the previous N."""
        ra, rb = self.results[a], self.results[b]
        sa = {e.n: e.sensitivity_at_min for e in ra.per_n}
        sb = {e.n: e.sensitivity_at_min for e in rb.per_n}
        common = sorted(set(sa) & set(sb))
        for n0, n1 in zip(common, common[1:]):
            if sa[n0] < sb[n0] and sb[n1] < sa[n1]:
                return n1
        return None


def _scaling_job(args):
    cfg, grids = args
    for grid in grids:
        hit = first_minimum(sweep_sensitivity(cfg, grid, Estimator.PARITY))
        if hit is not None:
            return cfg.n, cfg.noise_op, hit
    return cfg.n, cfg.noise_op, None


def crossover_experiment(
    n_list: Sequence[int],
    gamma: float = 0.03,
    delta: float = 0.5,
    ops: Sequence[NoiseOp | str] = (NoiseOp.SPLUS, NoiseOp.ALPHA),
    grid: Sequence[float] | None = None,
) -> CrossoverTable:
    """First-minimum sensitivity and bound versus N for twin-Fock input with parity readout."""
    if gamma <= 0:
        raise InvalidArgument("the crossover experiment needs a positive noise rate")
    ops = [NoiseOp(o) for o in ops]
    if grid is None:
        grids = [default_grid(0.5, 2 * math.pi + 0.5), default_grid()]
    else:
        grids = [grid]
    jobs = [(default_config_for(InputState.TF, n, noise_op=op, gamma=gamma, delta=delta), grids)
            for n in n_list for op in ops]
    per_op: dict = {op: [] for op in ops}
    missing = []
    for n, op, hit in _fan_out(_scaling_job, jobs):
        if hit is None:
            missing.append((n, op.value))
        else:
            per_op[op].append(ScalingEntry(n, *hit))
    results = {op: ScalingResult(op, tuple(sorted(v, key=lambda e: e.n))) for op, v in per_op.items()}
    return CrossoverTable(float(gamma), float(delta), results, tuple(missing))
