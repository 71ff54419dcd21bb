"""Flat ``key = value`` configuration merged with command-line flags."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..dynamics import IntegratorConfig
from ..errors import LindeyError
from ..estimation import Estimator
from ..fock import InputState
from ..protocol import NoiseOp, NoisePlacement, ProtocolConfig, default_config_for

EXPERIMENTS = (
    "sweep", "figure1", "figure2", "figure3", "figure4", "figure5", "figure6", "figure7",
    "appendixA", "invariance", "density", "crossover", "scaling",
)
DEFAULT_GRID = (0.5, 4 * math.pi, 0.02)
DEFAULT_GAMMAS = (0.01, 0.03, 0.05, 0.1)


class UsageError(Exception):
    def __init__(self, key: str | None, message: str):
        super().__init__(f"{key}: {message}" if key else message)
        self.key = key


def _choice(options):
    def parse(raw: str) -> str:
        v = raw.strip()
        if v not in options:
            raise ValueError(f"expected one of {', '.join(options)}")
        return v
    return parse


def _int(raw: str) -> int:
    return int(raw.strip())


def _float(raw: str) -> float:
    v = float(raw.strip())
    if not math.isfinite(v):
        raise ValueError("must be finite")
    return v


def _bool(raw: str) -> bool:
    v = raw.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _str(raw: str) -> str:
    return raw.strip()


def parse_n_list(raw: str) -> list[int]:
    """``a:b:c`` (inclusive range with step c), ``a:b`` or a comma list."""
    raw = raw.strip()
    if ":" in raw:
        parts = [int(p) for p in raw.split(":")]
        if len(parts) not in (2, 3):
            raise ValueError("expected start:stop[:step]")
        start, stop = parts[0], parts[1]
        step = parts[2] if len(parts) == 3 else 1
        if step <= 0:
            raise ValueError("step must be positive")
        out = list(range(start, stop + 1, step))
    else:
        out = [int(p) for p in raw.split(",") if p.strip()]
    if not out or min(out) < 1:
        raise ValueError("particle numbers must be >= 1")
    return out


def parse_float_list(raw: str) -> list[float]:
    out = [float(p) for p in raw.replace(";", ",").split(",") if p.strip()]
    if not out:
        raise ValueError("empty list")
    return out


# key -> parser; config files and flags share these names (flags use dashes)
KEYS = {
    "input": _choice([s.value for s in InputState]),
    "n": _int,
    "noise": _choice([s.value for s in NoiseOp]),
    "gamma": _float,
    "delta": _float,
    "j": _float,
    "tbs_first": _float,
    "tbs_second": _float,
    "noise_placement": _choice([s.value for s in NoisePlacement]),
    "dt": _float,
    "convergence_check": _bool,
    "thold_min": _float,
    "thold_max": _float,
    "thold_step": _float,
    "estimator": _choice([s.value for s in Estimator]),
    "experiment": _choice(EXPERIMENTS),
    "out_dir": _str,
    "format": _str,
    "n_list": parse_n_list,
    "gammas": parse_float_list,
}


def normalise_key(key: str) -> str:
    return key.strip().lower().replace("-", "_")


def convert(key: str, raw: str):
    key = normalise_key(key)
    if key not in KEYS:
        raise UsageError(key, "unknown configuration key")
    try:
        return KEYS[key](raw)
    except ValueError as exc:
        raise UsageError(key, f"invalid value {raw!r} ({exc})") from None


def read_config_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError("config", f"cannot read {path}: {exc.strerror}") from None
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(None, f"{path}:{lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        values[normalise_key(key)] = convert(key, raw)
    return values


@dataclass
class RunSettings:
    """Everything a suite run needs, after merging file, flags and defaults."""

    values: dict
    experiment: str = "sweep"
    out_dir: Path = Path("lindey-out")
    formats: tuple[str, ...] = ("csv", "svg")
    grid: np.ndarray = field(default_factory=lambda: _grid(*DEFAULT_GRID))
    n_list: list | None = None
    gammas: list | None = None
    estimator: Estimator | None = None

    def get(self, key, default=None):
        return self.values.get(key, default)

    def protocol_config(self, input_state=None, n=None, **overrides) -> ProtocolConfig:
        """Config for ``(input, n)`` with defaults, then file/flag values, then ``overrides``."""
        input_state = input_state or self.values.get("input")
        n = n or self.values.get("n")
        if input_state is None:
            raise UsageError("input", "an input state is required (n0, tf or noon)")
        if n is None:
            raise UsageError("n", "a particle number is required")
        base = dict(
            noise_op=self.values.get("noise", NoiseOp.SZ.value),
            gamma=self.values.get("gamma", 0.0),
        )
        mapping = dict(delta="delta", j="J", tbs_first="t_bs_first", tbs_second="t_bs_second",
                       noise_placement="noise_placement")
        for key, attr in mapping.items():
            if key in self.values:
                base[attr] = self.values[key]
        if "dt" in self.values or "convergence_check" in self.values:
            base["integrator"] = IntegratorConfig(
                dt=self.values.get("dt", IntegratorConfig.dt),
                convergence_check=self.values.get("convergence_check", False),
            )
        base.update(overrides)
        try:
            return default_config_for(input_state, n, **base)
        except LindeyError as exc:
            raise UsageError(_blame(str(exc)), str(exc)) from None


_BLAME = (
    ("particle", "n"), ("N=", "n"), ("N must", "n"), ("gamma", "gamma"), ("delta", "delta"),
    ("beam-splitter", "tbs_first"), ("integrator step", "dt"),
)


def _blame(message: str) -> str | None:
    return next((key for fragment, key in _BLAME if fragment in message), None)


def _grid(t_min: float, t_max: float, step: float) -> np.ndarray:
    if step <= 0:
        raise UsageError("thold_step", "must be positive")
    if t_min < 0:
        raise UsageError("thold_min", "must be non-negative")
    if t_max < t_min:
        raise UsageError("thold_max", "must not be below thold_min")
    return np.round(np.arange(t_min, t_max + step / 2, step), 12)


def build_settings(values: dict) -> RunSettings:
    grid = _grid(values.get("thold_min", DEFAULT_GRID[0]), values.get("thold_max", DEFAULT_GRID[1]),
                 values.get("thold_step", DEFAULT_GRID[2]))
    formats = tuple(f.strip().lower() for f in values.get("format", "csv,svg").split(",") if f.strip())
    for f in formats:
        if f not in ("csv", "json", "svg"):
            raise UsageError("format", f"unknown format {f!r}; choose from csv, json, svg")
    est = values.get("estimator")
    return RunSettings(
        values=values,
        experiment=values.get("experiment", "sweep"),
        out_dir=Path(values.get("out_dir", "lindey-out")),
        formats=formats or ("csv",),
        grid=grid,
        n_list=values.get("n_list"),
        gammas=values.get("gammas"),
        estimator=Estimator(est) if est else None,
    )
