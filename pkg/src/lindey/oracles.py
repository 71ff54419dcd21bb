"""Closed-form results for one and two particles.

These are the exact solutions of the protocol for N=1 (N0 and NOON inputs,
all three conserving noise operators) and the sensitivity formulas for N=2.
They are transcribed term by term and deliberately left unsimplified, so a
transcription slip shows up as a disagreement with the numerical pipeline
instead of being absorbed by algebra.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .errors import UnsupportedCase
from .fock import InputState
from .protocol import NoiseOp

# |denominator| at or below this is treated as an exact zero
ZERO_DENOMINATOR = 1e-12


class Quantity(enum.Enum):
    STATE_AFTER_HOLD = "state_after_hold"
    FINAL_STATE = "final_state"
    MEAN_N = "mean_n"
    DMEAN_DDELTA = "dmean_ddelta"
    VAR_N = "var_n"
    SENSITIVITY = "sensitivity"


_N1_QUANTITIES = frozenset(Quantity)
_N2_QUANTITIES = frozenset({Quantity.SENSITIVITY})
_CONSERVING = (NoiseOp.SZ, NoiseOp.SMINUS, NoiseOp.SPLUS)


@dataclass(frozen=True)
class AnalyticCase:
    """One tabulated closed-form result.

    N=1 covers N0 and NOON with every conserving operator and every quantity.
    N=2 covers the sensitivity of N0, TF and NOON (TF and NOON share one formula).
    """

    n: int
    input_state: InputState
    noise: NoiseOp
    quantity: Quantity = Quantity.SENSITIVITY

    def __post_init__(self):
        object.__setattr__(self, "input_state", InputState(self.input_state))
        object.__setattr__(self, "noise", NoiseOp(self.noise))
        object.__setattr__(self, "quantity", Quantity(self.quantity))
        if self.noise not in _CONSERVING:
            raise UnsupportedCase(f"no closed form for noise operator {self.noise.value!r}")
        if self.n == 1:
            if self.input_state is InputState.TF:
                raise UnsupportedCase("twin-Fock input needs an even particle number")
        elif self.n == 2:
            if self.quantity not in _N2_QUANTITIES:
                raise UnsupportedCase(f"only the sensitivity is tabulated for N=2, not {self.quantity.value}")
        else:
            raise UnsupportedCase(f"closed forms exist for N=1 and N=2 only, got N={self.n}")

    def with_quantity(self, quantity: Quantity | str) -> "AnalyticCase":
        return AnalyticCase(self.n, self.input_state, self.noise, Quantity(quantity))


def _require(case: AnalyticCase, quantity: Quantity) -> None:
    if case.quantity is not quantity:
        raise UnsupportedCase(f"case asks for {case.quantity.value}, not {quantity.value}")


def _ratio(num: float, den: float) -> float:
    return math.inf if abs(den) <= ZERO_DENOMINATOR else num / abs(den)


# ---------------------------------------------------------------- N = 1 states


def _n1_after_hold(inp: InputState, noise: NoiseOp, g: float, d: float, t: float) -> np.ndarray:
    coh = 0.5 * np.exp(-1j * d * t) * np.exp(-g * t / 2)
    low, high = 0.5 * np.exp(-g * t), 0.5 * (2 - np.exp(-g * t))
    diag = {NoiseOp.SZ: (0.5, 0.5), NoiseOp.SMINUS: (low, high), NoiseOp.SPLUS: (high, low)}[noise]
    off = -1j * coh if inp is InputState.N0 else coh
    return np.array([[diag[0], off], [np.conj(off), diag[1]]], dtype=complex)


def _n1_final(inp: InputState, noise: NoiseOp, g: float, d: float, t: float) -> np.ndarray:
    e = np.exp(-g * t / 2)
    sign = {NoiseOp.SZ: 0, NoiseOp.SPLUS: 1, NoiseOp.SMINUS: -1}[noise]
    sh = 2j * np.sinh(g * t / 2) * sign
    if inp is InputState.N0:
        c, s = np.cos(t * d), np.sin(t * d)
        r01 = -0.5 * e * (s + sh)
        r10 = -0.5 * e * (s - sh)
        return np.array([[0.5 - 0.5 * e * c, r01], [r10, 0.5 + 0.5 * e * c]], dtype=complex)
    s, c = np.sin(t * d), np.cos(t * d)
    r01 = 0.5 * e * (c - sh)
    r10 = 0.5 * e * (c + sh)
    return np.array([[0.5 - 0.5 * e * s, r01], [r10, 0.5 + 0.5 * e * s]], dtype=complex)


def analytic_state(case: AnalyticCase, gamma: float, delta: float, t_hold: float) -> np.ndarray:
    """Density matrix after the hold or at the end of the protocol (N=1 only)."""
    if case.quantity is Quantity.STATE_AFTER_HOLD:
        return _n1_after_hold(case.input_state, case.noise, gamma, delta, t_hold)
    if case.quantity is Quantity.FINAL_STATE:
        return _n1_final(case.input_state, case.noise, gamma, delta, t_hold)
    raise UnsupportedCase(f"{case.quantity.value} is not a state")


# ------------------------------------------------------- N = 1 imbalance moments


def analytic_mean(case: AnalyticCase, gamma: float, delta: float, t_hold: float) -> float:
    _require(case, Quantity.MEAN_N)
    e = math.exp(-gamma * t_hold / 2)
    if case.input_state is InputState.N0:
        return e * math.cos(t_hold * delta)
    return e * math.sin(t_hold * delta)


def analytic_dmean(case: AnalyticCase, gamma: float, delta: float, t_hold: float) -> float:
    _require(case, Quantity.DMEAN_DDELTA)
    e = math.exp(-gamma * t_hold / 2)
    if case.input_state is InputState.N0:
        return -t_hold * e * math.sin(t_hold * delta)
    return t_hold * e * math.cos(t_hold * delta)


def analytic_variance(case: AnalyticCase, gamma: float, delta: float, t_hold: float) -> float:
    _require(case, Quantity.VAR_N)
    trig = math.cos if case.input_state is InputState.N0 else math.sin
    return 1 - math.exp(-gamma * t_hold) * trig(t_hold * delta) ** 2


# ------------------------------------------------------------------ sensitivity


def _n1_sensitivity(inp, g, d, t):
    if inp is InputState.N0:
        num = math.sqrt(1 - math.exp(-g * t) * math.cos(t * d) ** 2)
        den = -t * math.exp(-g * t / 2) * math.sin(t * d)
    else:
        num = math.sqrt(1 - math.exp(-g * t) * math.sin(t * d) ** 2)
        den = t * math.exp(-g * t / 2) * math.cos(t * d)
    return _ratio(num, den)


def _n2_n0_sz(g, d, t):
    radicand = 3 + math.exp(-2 * g * t) * (math.cos(2 * t * d) - 4 * math.exp(g * t) * math.cos(t * d) ** 2)
    den = -2 * math.exp(-g * t / 2) * t * math.sin(t * d)
    return _ratio(math.sqrt(max(radicand, 0.0)), den)


def _n2_n0_pm(g, d, t):
    egt = math.exp(g * t)
    radicand = math.exp(-4 * g * t) * (
        math.exp(2 * g * t) * (1 + g * t + 2 * math.exp(2 * g * t) + egt * math.cos(2 * t * d))
        - (1 - 3 * egt) ** 2 * math.cos(t * d) ** 2
    )
    den = math.exp(-2 * g * t) * (3 * egt - 1) * t * math.sin(t * d)
    return _ratio(math.sqrt(max(radicand, 0.0)), den)


def _n2_parity_sz(g, d, t):
    num = math.sqrt(1 - math.exp(-4 * g * t) * math.cos(2 * t * d) ** 2)
    den = 2 * math.exp(-2 * g * t) * t * math.sin(2 * t * d)
    return _ratio(num, den)


def _n2_parity_pm(g, d, t):
    inner = math.cos(2 * d * t) - (g * t) * math.exp(-g * t)
    num = math.sqrt(max(1 - math.exp(-2 * g * t) * inner**2, 0.0))
    den = 2 * math.exp(-g * t) * t * math.sin(2 * d * t)
    return _ratio(num, den)


def analytic_sensitivity(case: AnalyticCase, gamma: float, delta: float, t_hold: float) -> float:
    """Closed-form sensitivity; ``math.inf`` where the denominator vanishes."""
    _require(case, Quantity.SENSITIVITY)
    g, d, t = float(gamma), float(delta), float(t_hold)
    if case.n == 1:
        return _n1_sensitivity(case.input_state, g, d, t)
    if case.input_state is InputState.N0:
        return (_n2_n0_sz if case.noise is NoiseOp.SZ else _n2_n0_pm)(g, d, t)
    return (_n2_parity_sz if case.noise is NoiseOp.SZ else _n2_parity_pm)(g, d, t)


# ----------------------------------------------------------- divergence lattices


@dataclass(frozen=True)
class Lattice:
    """Arithmetic progression ``offset + k * period`` for k = 0, 1, 2, ..."""

    offset: float
    period: float

    def times(self, t_min: float, t_max: float) -> np.ndarray:
        k0 = max(0, math.ceil((t_min - self.offset) / self.period - 1e-12))
        k1 = math.floor((t_max - self.offset) / self.period + 1e-12)
        return self.offset + self.period * np.arange(k0, k1 + 1)

    def __contains__(self, t: float) -> bool:
        k = (t - self.offset) / self.period
        return k > -1e-9 and abs(k - round(k)) * self.period < 1e-9


def analytic_insensitivity_times(case: AnalyticCase, delta: float) -> Lattice:
    if delta == 0:
        raise UnsupportedCase("without an energy shift there is no phase and no lattice")
    step = math.pi / abs(delta)
    if case.input_state is InputState.N0:
        return Lattice(step, step)
    if case.n == 1:
        return Lattice(step / 2, step)
    return Lattice(step / 2, step / 2)
