"""Beam splitter, noisy hold, beam splitter."""
from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .dynamics import (
    Diagnostics,
    IntegratorConfig,
    LindbladGenerator,
    apply_propagator,
    evolve_rk4,
    trajectory_rk4,
    unitary_propagator,
)
from .errors import InvalidArgument
from .fock import BasisKind, BasisSpec, InputState, OperatorSet, build_basis, build_input_state, build_operators


class NoiseOp(enum.Enum):
    SZ = "sz"
    SMINUS = "s-"
    SPLUS = "s+"
    ALPHA = "alpha"
    NONE = "none"

    @property
    def conserving(self) -> bool:
        return self is not NoiseOp.ALPHA


class NoisePlacement(enum.Enum):
    HOLD_ONLY = "hold"
    WHOLE_PROCESS = "whole"


QUARTER_PI = math.pi / 4


@dataclass(frozen=True)
class ProtocolConfig:
    n: int
    input_state: InputState
    noise_op: NoiseOp = NoiseOp.SZ
    gamma: float = 0.0
    delta: float = 0.5
    J: float = 1.0
    t_bs_first: float = QUARTER_PI
    t_bs_second: float = QUARTER_PI
    noise_placement: NoisePlacement = NoisePlacement.HOLD_ONLY
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)

    def __post_init__(self):
        object.__setattr__(self, "input_state", InputState(self.input_state))
        object.__setattr__(self, "noise_op", NoiseOp(self.noise_op))
        object.__setattr__(self, "noise_placement", NoisePlacement(self.noise_placement))
        if isinstance(self.n, bool) or int(self.n) != self.n or self.n < 1:
            raise InvalidArgument(f"N must be an integer >= 1, got {self.n!r}")
        object.__setattr__(self, "n", int(self.n))
        for name in ("gamma", "delta", "J", "t_bs_first", "t_bs_second"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InvalidArgument(f"{name} must be finite")
            object.__setattr__(self, name, value)
        if self.gamma < 0:
            raise InvalidArgument(f"gamma must be non-negative, got {self.gamma}")
        if self.t_bs_first < 0 or self.t_bs_second < 0:
            raise InvalidArgument("beam-splitter durations must be non-negative")
        if self.input_state is InputState.TF and self.n % 2:
            raise InvalidArgument(f"twin-Fock input needs an even particle number, got N={self.n}")

    @property
    def basis_kind(self) -> BasisKind:
        return BasisKind.TRUNCATED if self.noise_op is NoiseOp.ALPHA else BasisKind.FIXED_N

    def replace(self, **changes) -> "ProtocolConfig":
        return dataclasses.replace(self, **changes)


def default_config_for(input_state: InputState | str, n: int, **overrides) -> ProtocolConfig:
    """J=1, delta=0.5, quarter-period splitters, noise during the hold only.

    NOON inputs with N >= 2 get a half-period first splitter, which maps the
    NOON state onto itself so the hold sees the N-fold phase.
    """
    input_state = InputState(input_state)
    t_first = QUARTER_PI
    if input_state is InputState.NOON and n >= 2:
        t_first = 2 * QUARTER_PI
    params = dict(n=n, input_state=input_state, delta=0.5, J=1.0, t_bs_first=t_first, t_bs_second=QUARTER_PI)
    params.update(overrides)
    return ProtocolConfig(**params)


@dataclass(frozen=True)
class ProtocolRun:
    config: ProtocolConfig
    t_hold: float
    rho_after_bs1: np.ndarray
    rho_after_hold: np.ndarray
    rho_final: np.ndarray
    diagnostics: Diagnostics = field(default_factory=Diagnostics, compare=False)
    metadata: dict = field(default_factory=dict, compare=False)


class Interferometer:
    """Prepared operators, propagators and the cached post-splitter state for one config."""

    def __init__(self, cfg: ProtocolConfig):
        self.cfg = cfg
        self.basis: BasisSpec = build_basis(cfg.basis_kind, cfg.n)
        self.ops: OperatorSet = build_operators(self.basis, J=cfg.J, delta=cfg.delta)
        self.rho0 = build_input_state(self.basis, cfg.input_state, cfg.n)
        self._jump = self._jump_ops()
        self._bs1_state: np.ndarray | None = None
        self._splitters: dict = {}
        self.metadata: dict = {}
        if cfg.input_state is InputState.NOON and cfg.n > 2:
            self.metadata["noon_first_splitter"] = (
                f"t_bs_first={cfg.t_bs_first!r}; the half-period NOON splitter is only stated for N=2"
            )

    def _jump_ops(self) -> tuple:
        cfg, ops = self.cfg, self.ops
        if cfg.noise_op is NoiseOp.NONE or cfg.gamma == 0:
            return ()
        op = {
            NoiseOp.SZ: ops.s_z,
            NoiseOp.SMINUS: ops.s_minus,
            NoiseOp.SPLUS: ops.s_plus,
        }.get(cfg.noise_op)
        if op is None:
            op = ops.loss_operator()
        return ((op, cfg.gamma),)

    def _splitter_generator(self) -> LindbladGenerator:
        if "generator" not in self._splitters:
            self._splitters["generator"] = LindbladGenerator(self.ops.h_j, self._jump, self.basis.totals)
        return self._splitters["generator"]

    def _unitary(self, duration: float):
        if duration not in self._splitters:
            self._splitters[duration] = unitary_propagator(self.ops.h_j, duration)
        return self._splitters[duration]

    def hold_generator(self, delta: float | None = None) -> LindbladGenerator:
        delta = self.cfg.delta if delta is None else delta
        na, nb = self.basis.occupations
        h = np.diag(0.5 * delta * (na - nb)).astype(complex)
        return LindbladGenerator(h, self._jump, self.basis.totals)

    def _splitter(self, rho: np.ndarray, duration: float, diag: Diagnostics) -> np.ndarray:
        noisy = self.cfg.noise_placement is NoisePlacement.WHOLE_PROCESS and self._jump
        if noisy:
            return evolve_rk4(self._splitter_generator(), rho, duration, self.cfg.integrator, diag)
        return apply_propagator(self._unitary(duration), rho)

    def after_bs1(self, diag: Diagnostics | None = None) -> np.ndarray:
        if self._bs1_state is None:
            state = self._splitter(self.rho0, self.cfg.t_bs_first, diag or Diagnostics())
            state.setflags(write=False)
            self._bs1_state = state
        return self._bs1_state

    def hold(self, rho: np.ndarray, t_hold: float, delta: float | None = None, diag: Diagnostics | None = None):
        return evolve_rk4(self.hold_generator(delta), rho, t_hold, self.cfg.integrator, diag)

    def after_bs2(self, rho: np.ndarray, diag: Diagnostics | None = None) -> np.ndarray:
        return self._splitter(rho, self.cfg.t_bs_second, diag or Diagnostics())

    def run(self, t_hold: float, delta: float | None = None) -> ProtocolRun:
        if t_hold < 0:
            raise InvalidArgument("holding time must be non-negative")
        diag = Diagnostics()
        rho1 = self.after_bs1(diag)
        rho2 = self.hold(rho1, t_hold, delta, diag)
        rho3 = self.after_bs2(rho2, diag)
        cfg = self.cfg if delta is None else self.cfg.replace(delta=delta)
        return ProtocolRun(cfg, float(t_hold), rho1, rho2, rho3, diag, dict(self.metadata))

    def final_states(
        self, t_grid: Sequence[float], delta: float | None = None, diag: Diagnostics | None = None
    ) -> Iterator[np.ndarray]:
        """Final density matrices along one hold trajectory checkpointed at ``t_grid``."""
        diag = diag if diag is not None else Diagnostics()
        rho1 = self.after_bs1(diag)
        for rho in trajectory_rk4(self.hold_generator(delta), rho1, t_grid, self.cfg.integrator, diag):
            yield self.after_bs2(rho, diag)


def run_protocol(cfg: ProtocolConfig, t_hold: float) -> ProtocolRun:
    return Interferometer(cfg).run(t_hold)
