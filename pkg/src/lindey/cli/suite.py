"""Built-in experiments behind ``--experiment``.

Each experiment writes its files under ``out_dir`` and records physics
invariant violations (trace drift, positivity, Cramer-Rao ordering, oracle
mismatch). The process exit status is 0 when none occurred, 1 otherwise, and
every violation is printed with the name of the invariant it breaks.
"""
from __future__ import annotations

import math
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..analysis import (
    check_gamma_invariance,
    count_density_vs_N,
    crossover_experiment,
    default_grid,
    find_insensitivity_points,
)
from ..dynamics import Diagnostics
from ..errors import LindeyError
from ..estimation import SensitivityCurve, sweep_sensitivity
from ..fock import InputState
from ..oracles import AnalyticCase, analytic_insensitivity_times, analytic_sensitivity
from ..protocol import NoiseOp, NoisePlacement
from .config import DEFAULT_GAMMAS, EXPERIMENTS, RunSettings, UsageError, _grid
from .emit import embed_manifest, emit_curve, render_series_svg, write_table_csv
from .manifest import RunManifest, grid_spec

TRACE_DRIFT_MAX = 1e-9
MIN_EIGENVALUE = -1e-8
CRLB_SLACK = 1e-6
ORACLE_RTOL = 1e-5
ORACLE_KEEP_OUT = 0.05  # skip samples this close to a divergence when comparing to a closed form


@dataclass
class Suite:
    settings: RunSettings
    experiment: str
    violations: list = field(default_factory=list)
    written: list = field(default_factory=list)

    @property
    def out_dir(self) -> Path:
        return self.settings.out_dir

    def grid(self, default=None) -> np.ndarray:
        """The flag/file grid if any grid key was given, else ``default`` or the global default."""
        keys = ("thold_min", "thold_max", "thold_step")
        if default is None or any(k in self.settings.values for k in keys):
            return self.settings.grid
        return default

    def gammas(self, default=DEFAULT_GAMMAS) -> list[float]:
        return list(self.settings.gammas or default)

    def violate(self, invariant: str, detail: str) -> None:
        self.violations.append((invariant, detail))

    # ---------------------------------------------------------------- checks

    def check_curve(self, label: str, curve: SensitivityCurve) -> None:
        d = curve.diagnostics
        if d.max_trace_drift > TRACE_DRIFT_MAX:
            self.violate("trace preservation", f"{label}: drift {d.max_trace_drift:.3e}")
        if d.min_eigenvalue < MIN_EIGENVALUE:
            self.violate("positivity", f"{label}: eigenvalue {d.min_eigenvalue:.3e}")
        for t, msg in curve.failures:
            self.violate("integration", f"{label}: T_H={t}: {msg}")
        for p in curve.points:
            if math.isfinite(p.sensitivity) and math.isfinite(p.crlb) and p.sensitivity + CRLB_SLACK < p.crlb:
                self.violate("Cramer-Rao bound", f"{label}: T_H={p.t_hold}: {p.sensitivity:.6g} < {p.crlb:.6g}")
                break

    def check_oracle(self, label: str, curve: SensitivityCurve, case: AnalyticCase) -> float:
        cfg = curve.config
        lattice = analytic_insensitivity_times(case, cfg.delta)
        worst = 0.0
        for p in curve.points:
            near = lattice.times(p.t_hold - ORACLE_KEEP_OUT, p.t_hold + ORACLE_KEEP_OUT)
            if len(near) or p.t_hold <= 0:
                continue
            ref = analytic_sensitivity(case, cfg.gamma, cfg.delta, p.t_hold)
            if not math.isfinite(ref):
                continue
            worst = max(worst, abs(p.sensitivity / ref - 1))
        if worst > ORACLE_RTOL:
            self.violate("oracle agreement", f"{label}: relative deviation {worst:.3e} > {ORACLE_RTOL:g}")
        return worst

    # ---------------------------------------------------------------- output

    def emit(self, curves: list, stem: str, title: str, overlays=(), markers=(), extra=None) -> None:
        diag = Diagnostics()
        for _, c in curves:
            diag.merge(c.diagnostics)
        first = curves[0][1]
        manifest = RunManifest(
            config=first.config,
            grid=grid_spec(first.t),
            experiment=self.experiment,
            estimator=first.estimator.value,
            outputs=[f"{stem}.{fmt}" for fmt in self.settings.formats],
            diagnostics=diag.as_dict(),
            extra=dict(extra or {}, curves=[label for label, _ in curves]),
        )
        payload = curves if len(curves) > 1 or curves[0][0] else first
        for fmt in self.settings.formats:
            kw = dict(title=title, overlays=overlays, markers=markers) if fmt == "svg" else {}
            self.written.append(emit_curve(payload, manifest, fmt, self.out_dir, stem, **kw))

    def emit_table(self, stem: str, rows: list, columns: list, cfg, grid, extra=None, svg: str | None = None):
        manifest = RunManifest(
            config=cfg, grid=grid_spec(grid), experiment=self.experiment,
            outputs=[f"{stem}.csv"] + ([f"{stem}.svg"] if svg else []), extra=extra or {},
        )
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.written.append(write_table_csv(self.out_dir / f"{stem}.csv", rows, columns, manifest))
        if svg:
            path = self.out_dir / f"{stem}.svg"
            path.write_text(embed_manifest(svg, manifest))
            self.written.append(path)

    def sweep(self, cfg, grid, estimator=None, label="") -> SensitivityCurve:
        curve = sweep_sensitivity(cfg, grid, estimator)
        self.check_curve(label or self.experiment, curve)
        return curve


def _op_tag(op: NoiseOp) -> str:
    return {NoiseOp.SMINUS: "sminus", NoiseOp.SPLUS: "splus"}.get(op, op.value)


def _overlay(label, grid, scale):
    return [(label, list(grid), [scale / t if t > 0 else math.inf for t in grid])]


# ------------------------------------------------------------------- experiments


def _exp_sweep(s: Suite) -> None:
    cfg = s.settings.protocol_config()
    grid = s.grid()
    curve = s.sweep(cfg, grid, s.settings.estimator, "sweep")
    markers = ()
    try:
        markers = find_insensitivity_points(curve).locations if len(grid) >= 4 else ()
    except LindeyError:
        pass
    title = f"{cfg.input_state.value} N={cfg.n} L={cfg.noise_op.value} gamma={cfg.gamma:g}"
    s.emit([("", curve)], "sweep", title, markers=markers, extra=dict(insensitivity_points=list(markers)))


def _gamma_family(s: Suite, input_state, n, op, stem, title, noiseless_scale, overlay_label):
    grid = s.grid()
    curves = []
    for g in [0.0] + [x for x in s.gammas() if x != 0.0]:
        cfg = s.settings.protocol_config(input_state, n, noise_op=op, gamma=g)
        label = f"gamma={g:g}"
        curve = s.sweep(cfg, grid, None, f"{stem} {label}")
        worst = s.check_oracle(f"{stem} {label}", curve, AnalyticCase(n, input_state, op))
        curves.append((label, curve))
        print(f"{stem}: {label} max relative deviation from closed form {worst:.2e}")
    s.emit(curves, stem, title, overlays=_overlay(overlay_label, grid, noiseless_scale))


def _exp_figure1(s: Suite) -> None:
    op = NoiseOp(s.settings.get("noise", "sz"))
    _gamma_family(s, InputState.N0, 1, op, "figure1", "N=1, input |1,0>", 1.0, "1/T_H")


def _exp_figure2(s: Suite) -> None:
    op = NoiseOp(s.settings.get("noise", "sz"))
    _gamma_family(s, InputState.NOON, 1, op, "figure2", "N=1, NOON input", 1.0, "1/T_H")


def _exp_figure3(s: Suite) -> None:
    for op in (NoiseOp.SZ, NoiseOp.SMINUS, NoiseOp.SPLUS):
        _gamma_family(s, InputState.N0, 2, op, f"figure3_{_op_tag(op)}", f"N=2, input |2,0>, L={op.value}",
                      1 / math.sqrt(2), "1/(sqrt2 T_H)")


def _exp_figure4(s: Suite) -> None:
    for inp in (InputState.TF, InputState.NOON):
        for op in (NoiseOp.SZ, NoiseOp.SMINUS, NoiseOp.SPLUS):
            _gamma_family(s, inp, 2, op, f"figure4_{inp.value}_{_op_tag(op)}",
                          f"N=2, {inp.value} input, L={op.value}", 0.5, "1/(2T_H)")


def _exp_figure5(s: Suite) -> None:
    grid = s.grid()
    n_list = s.settings.n_list or [2, 4, 6, 8]
    gammas = s.gammas()
    panel_gamma = 0.01
    for inp in InputState:
        ns = [n for n in n_list if inp is not InputState.TF or n % 2 == 0]
        panels = {
            1: [(f"N={n}", dict(n=n, gamma=0.0)) for n in ns],
            2: [(f"N={n}", dict(n=n, gamma=panel_gamma)) for n in ns],
            3: [(f"gamma={g:g}", dict(n=4, gamma=g)) for g in gammas],
            4: [(f"L={op.value}", dict(n=4, gamma=panel_gamma, noise_op=op))
                for op in (NoiseOp.SMINUS, NoiseOp.SPLUS, NoiseOp.SZ)],
        }
        for k, specs in panels.items():
            curves = []
            for label, kw in specs:
                n = kw.pop("n")
                kw.setdefault("noise_op", NoiseOp.SZ)
                cfg = s.settings.protocol_config(inp, n, **kw)
                curves.append((label, s.sweep(cfg, grid, None, f"figure5 {inp.value} panel{k} {label}")))
            s.emit(curves, f"figure5_{inp.value}_panel{k}", f"{inp.value}: panel {k}")


def _exp_figure6(s: Suite) -> None:
    grid = s.grid()
    gamma = s.settings.get("gamma", 0.03) or 0.03
    for n in s.settings.n_list or [2, 16]:
        curves = []
        for op in (NoiseOp.SPLUS, NoiseOp.ALPHA):
            cfg = s.settings.protocol_config(InputState.TF, n, noise_op=op, gamma=gamma)
            curves.append((f"L={op.value}", s.sweep(cfg, grid, "parity", f"figure6 N={n} {op.value}")))
        a, b = curves[0][1].sensitivity, curves[1][1].sensitivity
        ok = np.isfinite(a) & np.isfinite(b)
        better = int(np.count_nonzero(a[ok] < b[ok]))
        print(f"figure6: N={n}: L=s+ beats L=alpha at {better} of {int(ok.sum())} holding times")
        s.emit(curves, f"figure6_n{n}", f"TF N={n}, gamma={gamma:g}, parity",
               extra=dict(splus_better_count=better, compared=int(ok.sum())))


def _crossover(s: Suite, stem: str) -> None:
    n_list = s.settings.n_list or list(range(2, 21, 2))
    gamma = s.settings.get("gamma", 0.03) or 0.03
    delta = s.settings.get("delta", 0.5)
    given = any(k in s.settings.values for k in ("thold_min", "thold_max", "thold_step"))
    table = crossover_experiment(n_list, gamma=gamma, delta=delta, grid=s.settings.grid if given else None)
    rows = table.rows()
    for r in rows:
        if r["sensitivity"] + CRLB_SLACK < r["crlb"]:
            s.violate("Cramer-Rao bound", f"{stem}: N={r['n']} {r['noise_op']}")
        print(f"{stem}: N={r['n']:>2} L={r['noise_op']:<5} t_min={r['t_min']:.4f} "
              f"sensitivity={r['sensitivity']:.6g} crlb={r['crlb']:.6g}")
    for n, op in table.missing:
        print(f"{stem}: N={n} L={op}: no local minimum at or after pi on the grid")
    extra = dict(gamma=gamma, delta=delta, crossing_n=table.crossing_n(), missing=[list(m) for m in table.missing])
    if stem == "scaling":
        for op, res in table.results.items():
            ns, sens = res.column("n"), res.column("sensitivity_at_min")
            if len(ns) >= 2:
                extra[f"exponent_{op.value}"] = float(np.polyfit(np.log(ns), np.log(sens), 1)[0])
    print(f"{stem}: measured curves cross at N={extra['crossing_n']}")
    series = []
    for op, res in table.results.items():
        ns = list(res.column("n"))
        series.append((f"{op.value} sensitivity", ns, list(res.column("sensitivity_at_min")), ""))
        series.append((f"{op.value} CRLB", ns, list(res.column("crlb_at_min")), "3,3"))
    svg = render_series_svg(series, f"TF, parity, gamma={gamma:g}: first minimum after pi", "N", "sensitivity")
    cfg = s.settings.protocol_config(InputState.TF, n_list[0], gamma=gamma, noise_op=NoiseOp.SPLUS)
    s.emit_table(stem, rows, ["n", "noise_op", "t_min", "sensitivity", "crlb"], cfg,
                 default_grid(0.5, 2 * math.pi + 0.5), extra, svg)


def _exp_crossover(s: Suite) -> None:
    _crossover(s, "crossover")


def _exp_figure7(s: Suite) -> None:
    _crossover(s, "figure7")


def _exp_scaling(s: Suite) -> None:
    _crossover(s, "scaling")


def _exp_appendix_a(s: Suite) -> None:
    grid = s.grid(default=_grid(0.5, 20.0, 0.02))
    for g in s.settings.gammas or [0.05, 0.1]:
        curves = []
        base = s.settings.protocol_config(InputState.N0, 1, gamma=g, noise_op=NoiseOp.SZ)
        hold = s.sweep(base, grid, None, f"appendixA gamma={g:g} hold-only")
        curves.append(("hold-only", hold))
        for op in (NoiseOp.SZ, NoiseOp.SMINUS, NoiseOp.SPLUS):
            cfg = base.replace(noise_op=op, noise_placement=NoisePlacement.WHOLE_PROCESS)
            c = s.sweep(cfg, grid, None, f"appendixA gamma={g:g} whole {op.value}")
            curves.append((f"whole L={op.value}", c))
            ok = np.isfinite(c.sensitivity) & np.isfinite(hold.sensitivity)
            worse = bool(np.all(c.sensitivity[ok] >= hold.sensitivity[ok] - 1e-8))
            print(f"appendixA: gamma={g:g} L={op.value}: whole-process >= hold-only everywhere: {worse}")
        s.emit(curves, f"appendixA_gamma{g:g}", f"N=1 |1,0>, gamma={g:g}: noise placement",
               overlays=_overlay("1/T_H", grid, 1.0))


def _exp_invariance(s: Suite) -> None:
    v = s.settings.values
    cfg = s.settings.protocol_config(v.get("input", "tf"), v.get("n", 4))
    gammas = s.settings.gammas or [0.01, 0.05, 0.1]
    grid = s.grid(default=default_grid())
    verdict = check_gamma_invariance(cfg, gammas, grid, s.settings.estimator)
    rows = [dict(gamma=g, count=len(locs), locations=list(locs)) for g, locs in verdict.locations.items()]
    s.emit_table("invariance", rows, ["gamma", "count", "locations"], cfg, grid,
                 dict(invariant=verdict.invariant, max_shift=verdict.max_shift, tolerance=verdict.tolerance,
                      detail=verdict.detail))
    print(f"invariance: {cfg.input_state.value} N={cfg.n} L={cfg.noise_op.value} gammas={gammas}: "
          f"invariant={verdict.invariant} max_shift={verdict.max_shift:.3e} tolerance={verdict.tolerance:.3e}")
    if not verdict.invariant:
        s.violate("gamma-invariance of insensitivity points", verdict.detail)


def _exp_density(s: Suite) -> None:
    v = s.settings.values
    inp = InputState(v.get("input", "tf"))
    n_list = s.settings.n_list or [4, 6, 8]
    gammas = s.settings.gammas or [0.0, 0.01]
    grid = s.grid(default=default_grid())
    noise = NoiseOp(v.get("noise", "sz"))
    rows = count_density_vs_N(inp, n_list, gammas, noise, grid, v.get("delta", 0.5))
    out = []
    for r in rows:
        print(f"density: {inp.value} N={r.n} gamma={r.gamma:g}: {r.per_period_count} per pi")
        out.append(dict(n=r.n, gamma=r.gamma, per_period_count=r.per_period_count if r.per_period_count is not None
                        else float("nan"), locations=list(r.locations)))
    cfg = s.settings.protocol_config(inp, n_list[0], noise_op=noise)
    s.emit_table("density", out, ["n", "gamma", "per_period_count", "locations"], cfg, grid)


_EXPERIMENTS = {
    "sweep": _exp_sweep,
    "figure1": _exp_figure1,
    "figure2": _exp_figure2,
    "figure3": _exp_figure3,
    "figure4": _exp_figure4,
    "figure5": _exp_figure5,
    "figure6": _exp_figure6,
    "figure7": _exp_figure7,
    "appendixA": _exp_appendix_a,
    "invariance": _exp_invariance,
    "density": _exp_density,
    "crossover": _exp_crossover,
    "scaling": _exp_scaling,
}
assert set(_EXPERIMENTS) == set(EXPERIMENTS)


def run_suite(selector: str, settings: RunSettings) -> int:
    """Run one built-in experiment; 0 on success, 1 on violations or failures, 2 on usage errors."""
    if selector not in _EXPERIMENTS:
        print(f"lindey: error: unknown experiment {selector!r}; choose from {', '.join(EXPERIMENTS)}",
              file=sys.stderr)
        return 2
    suite = Suite(settings, selector)
    try:
        _EXPERIMENTS[selector](suite)
    except UsageError as exc:
        print(f"lindey: error: {exc}", file=sys.stderr)
        return 2
    except LindeyError as exc:
        print(f"lindey: {selector} failed: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"lindey: cannot write output: {exc}", file=sys.stderr)
        return 1
    for path in suite.written:
        print(f"wrote {path}")
    for invariant, detail in suite.violations:
        print(f"invariant violated: {invariant}: {detail}", file=sys.stderr)
    return 1 if suite.violations else 0
