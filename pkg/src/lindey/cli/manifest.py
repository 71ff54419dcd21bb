"""Run manifests: a self-contained record of what produced a data file."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path

from .. import __version__
from ..dynamics import IntegratorConfig
from ..errors import InvalidArgument
from ..protocol import ProtocolConfig

MANIFEST_PREFIX = "# manifest: "
TIMESTAMP_PREFIX = "# timestamp: "
CURVE_PREFIX = "# curve: "


def config_to_dict(cfg: ProtocolConfig) -> dict:
    return dict(
        n=cfg.n,
        input=cfg.input_state.value,
        noise=cfg.noise_op.value,
        gamma=cfg.gamma,
        delta=cfg.delta,
        J=cfg.J,
        tbs_first=cfg.t_bs_first,
        tbs_second=cfg.t_bs_second,
        noise_placement=cfg.noise_placement.value,
        dt=cfg.integrator.dt,
        convergence_check=cfg.integrator.convergence_check,
        convergence_tol=cfg.integrator.convergence_tol,
    )


def config_from_dict(d: dict) -> ProtocolConfig:
    try:
        integrator = IntegratorConfig(d["dt"], d.get("convergence_check", False), d.get("convergence_tol", 1e-8))
        return ProtocolConfig(
            n=d["n"],
            input_state=d["input"],
            noise_op=d["noise"],
            gamma=d["gamma"],
            delta=d["delta"],
            J=d.get("J", 1.0),
            t_bs_first=d["tbs_first"],
            t_bs_second=d["tbs_second"],
            noise_placement=d["noise_placement"],
            integrator=integrator,
        )
    except KeyError as exc:
        raise InvalidArgument(f"manifest config lacks key {exc.args[0]!r}") from None


@dataclass
class RunManifest:
    config: ProtocolConfig
    grid: dict
    experiment: str = "sweep"
    estimator: str | None = None
    outputs: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)
    tool_version: str = __version__
    timestamp: str = field(default_factory=lambda: datetime.now(timezone.utc).isoformat(timespec="seconds"))

    def body(self) -> dict:
        """Everything except the timestamp, in a stable key order."""
        return dict(
            tool="lindey",
            tool_version=self.tool_version,
            experiment=self.experiment,
            config=config_to_dict(self.config),
            estimator=self.estimator,
            grid=self.grid,
            outputs=list(self.outputs),
            diagnostics=self.diagnostics,
            extra=self.extra,
        )

    def header_lines(self) -> list[str]:
        return [MANIFEST_PREFIX + json.dumps(self.body(), sort_keys=True), TIMESTAMP_PREFIX + self.timestamp]

    def as_dict(self) -> dict:
        return dict(self.body(), timestamp=self.timestamp)

    @classmethod
    def from_dict(cls, d: dict) -> "RunManifest":
        return cls(
            config=config_from_dict(d["config"]),
            grid=d.get("grid", {}),
            experiment=d.get("experiment", "sweep"),
            estimator=d.get("estimator"),
            outputs=list(d.get("outputs", [])),
            diagnostics=d.get("diagnostics", {}),
            extra=d.get("extra", {}),
            tool_version=d.get("tool_version", __version__),
            timestamp=d.get("timestamp", ""),
        )


def grid_spec(grid) -> dict:
    grid = [float(x) for x in grid]
    step = (grid[-1] - grid[0]) / (len(grid) - 1) if len(grid) > 1 else 0.0
    return dict(t_min=grid[0], t_max=grid[-1], count=len(grid), step=round(step, 12))


def read_manifest(path: str | Path) -> RunManifest:
    """Recover the manifest from an emitted CSV, JSON or SVG file."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        return RunManifest.from_dict(json.loads(text)["manifest"])
    body, stamp = None, ""
    for line in text.splitlines():
        if line.startswith(MANIFEST_PREFIX):
            body = json.loads(line[len(MANIFEST_PREFIX):])
        elif line.startswith(TIMESTAMP_PREFIX):
            stamp = line[len(TIMESTAMP_PREFIX):]
        elif not line.startswith(("#", "<")):
            break
    if body is None:
        raise InvalidArgument(f"{path} carries no manifest header")
    body["timestamp"] = stamp
    return RunManifest.from_dict(body)

