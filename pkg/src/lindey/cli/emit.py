"""CSV, JSON and SVG writers for sensitivity curves and result tables."""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Sequence

from ..errors import InvalidArgument
from ..estimation import SensitivityCurve
from .manifest import CURVE_PREFIX, RunManifest, config_to_dict

COLUMNS = ("t_hold", "mean", "variance", "dmean_ddelta", "sensitivity", "qfi", "crlb", "divergent")
FORMATS = ("csv", "json", "svg")


def _num(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return repr(float(x))


def _csv_rows(curve: SensitivityCurve) -> list[str]:
    rows = [",".join(COLUMNS)]
    for p in curve.points:
        sens = math.inf if p.divergent else p.sensitivity
        values = [p.t_hold, p.mean, p.variance, p.dmean_ddelta, sens, p.qfi, p.crlb]
        rows.append(",".join(_num(v) for v in values) + ("," + ("1" if p.divergent else "0")))
    return rows


def _curve_label(label: str, curve: SensitivityCurve) -> str:
    info = dict(label=label, config=config_to_dict(curve.config), estimator=curve.estimator.value)
    if curve.failures:
        info["failures"] = [[t, msg] for t, msg in curve.failures]
    return CURVE_PREFIX + json.dumps(info, sort_keys=True)


def _labelled(curves) -> list[tuple[str, SensitivityCurve]]:
    if isinstance(curves, SensitivityCurve):
        return [("", curves)]
    out = list(curves)
    if not out:
        raise InvalidArgument("nothing to emit")
    return out


def write_csv(path: Path, curves, manifest: RunManifest) -> Path:
    """One ``# curve:`` block per curve when several share a file."""
    labelled = _labelled(curves)
    lines = list(manifest.header_lines())
    multi = len(labelled) > 1 or labelled[0][0]
    for label, curve in labelled:
        if not curve.points:
            raise InvalidArgument(f"curve {label!r} has no points")
        if multi:
            lines.append(_curve_label(label, curve))
        lines.extend(_csv_rows(curve))
    path.write_text("\n".join(lines) + "\n")
    return path


def _json_point(p) -> dict:
    d = {c: getattr(p, c) for c in COLUMNS}
    if p.divergent or not math.isfinite(p.sensitivity):
        d["sensitivity"] = None
    if not math.isfinite(p.crlb):
        d["crlb"] = None
    return d


def write_json(path: Path, curves, manifest: RunManifest) -> Path:
    payload = dict(
        manifest=manifest.as_dict(),
        columns=list(COLUMNS),
        curves=[
            dict(label=label, config=config_to_dict(c.config), estimator=c.estimator.value,
                 failures=[[t, m] for t, m in c.failures], rows=[_json_point(p) for p in c.points])
            for label, c in _labelled(curves)
        ],
    )
    path.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
    return path


def write_table_csv(path: Path, rows: Sequence[dict], columns: Sequence[str], manifest: RunManifest) -> Path:
    lines = list(manifest.header_lines())
    lines.append(",".join(columns))
    for r in rows:
        cells = []
        for c in columns:
            v = r[c]
            if isinstance(v, float):
                cells.append(_num(v))
            elif isinstance(v, (list, tuple)):
                cells.append(" ".join(_num(x) for x in v))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    path.write_text("\n".join(lines) + "\n")
    return path


# ------------------------------------------------------------------------- SVG

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")
_W, _H, _L, _R, _T, _B = 720, 440, 70, 150, 30, 50


class _Axes:
    def __init__(self, x_lo, x_hi, y_lo, y_hi, log_y=True):
        self.x_lo, self.x_hi = x_lo, x_hi if x_hi > x_lo else x_lo + 1
        f = math.log10 if log_y else float
        self.f = f
        self.y_lo, self.y_hi = f(y_lo), f(y_hi)
        if self.y_hi <= self.y_lo:
            self.y_hi = self.y_lo + 1
        self.log_y = log_y

    def x(self, v):
        return _L + (v - self.x_lo) / (self.x_hi - self.x_lo) * (_W - _L - _R)

    def y(self, v):
        return _T + (self.y_hi - self.f(v)) / (self.y_hi - self.y_lo) * (_H - _T - _B)


def _frame(ax: _Axes, title: str, xlabel: str, ylabel: str) -> list[str]:
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" viewBox="0 0 {_W} {_H}" '
        'font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2 - _R / 2:.1f}" y="18" text-anchor="middle" font-size="13">{_esc(title)}</text>',
        f'<rect x="{_L}" y="{_T}" width="{_W - _L - _R}" height="{_H - _T - _B}" fill="none" stroke="black"/>',
        f'<text x="{(_L + _W - _R) / 2:.1f}" y="{_H - 10}" text-anchor="middle">{_esc(xlabel)}</text>',
        f'<text x="16" y="{(_T + _H - _B) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(_T + _H - _B) / 2:.1f})">{_esc(ylabel)}</text>',
    ]
    if ax.log_y:
        for e in range(math.floor(ax.y_lo), math.ceil(ax.y_hi) + 1):
            if ax.y_lo <= e <= ax.y_hi:
                y = ax.y(10.0**e)
                out.append(f'<line x1="{_L}" y1="{y:.2f}" x2="{_W - _R}" y2="{y:.2f}" stroke="#ddd"/>')
                out.append(f'<text x="{_L - 6}" y="{y + 4:.2f}" text-anchor="end">1e{e}</text>')
    n_ticks = 6
    for i in range(n_ticks + 1):
        v = ax.x_lo + i * (ax.x_hi - ax.x_lo) / n_ticks
        x = ax.x(v)
        out.append(f'<line x1="{x:.2f}" y1="{_H - _B}" x2="{x:.2f}" y2="{_H - _B + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{_H - _B + 18}" text-anchor="middle">{v:.3g}</text>')
    return out


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")


def _polylines(ax: _Axes, xs, ys, color: str, dash: str = "") -> list[str]:
    """Polyline segments, broken wherever the value is not finite and positive."""
    out, seg = [], []
    style = f' stroke-dasharray="{dash}"' if dash else ""

    def flush():
        if len(seg) > 1:
            pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in seg)
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.3"{style}/>')
        seg.clear()

    for x, y in zip(xs, ys):
        if math.isfinite(y) and y > 0:
            seg.append((ax.x(x), ax.y(min(max(y, 10**ax.y_lo), 10**ax.y_hi))))
        else:
            flush()
    flush()
    return out


def _legend(labels: list[tuple[str, str, str]]) -> list[str]:
    out = []
    for i, (label, color, dash) in enumerate(labels):
        y = _T + 14 + 16 * i
        style = f' stroke-dasharray="{dash}"' if dash else ""
        out.append(f'<line x1="{_W - _R + 10}" y1="{y - 4}" x2="{_W - _R + 30}" y2="{y - 4}" '
                   f'stroke="{color}" stroke-width="2"{style}/>')
        out.append(f'<text x="{_W - _R + 34}" y="{y}">{_esc(label)}</text>')
    return out


def _y_range(values) -> tuple[float, float]:
    finite = sorted(v for v in values if math.isfinite(v) and v > 0)
    if not finite:
        return 0.1, 10.0
    lo = finite[0]
    hi = finite[min(len(finite) - 1, int(0.98 * len(finite)))]  # clip the spikes next to divergences
    return lo / 1.5, max(hi * 3, lo * 10)


def render_curves_svg(curves, title: str = "", overlays: Sequence = (), markers: Sequence[float] = ()) -> str:
    """Log-scale sensitivity against holding time.

    ``overlays`` are (label, xs, ys) reference lines drawn dashed; divergent grid
    points and any extra ``markers`` become vertical lines.
    """
    labelled = _labelled(curves)
    xs_all = [p.t_hold for _, c in labelled for p in c.points]
    ys_all = [p.sensitivity for _, c in labelled for p in c.points]
    ax = _Axes(min(xs_all), max(xs_all), *_y_range(ys_all))
    out = _frame(ax, title, "holding time T_H", "sensitivity")
    legend = []
    for i, (label, c) in enumerate(labelled):
        color = _PALETTE[i % len(_PALETTE)]
        out += _polylines(ax, [p.t_hold for p in c.points], [p.sensitivity for p in c.points], color)
        for p in c.points:
            if p.divergent:
                x = ax.x(p.t_hold)
                out.append(f'<line x1="{x:.2f}" y1="{_T}" x2="{x:.2f}" y2="{_H - _B}" stroke="{color}" '
                           'stroke-dasharray="2,3" stroke-width="0.8"/>')
        legend.append((label or "sensitivity", color, ""))
    for j, (label, xs, ys) in enumerate(overlays):
        out += _polylines(ax, xs, ys, "black", "5,3")
        legend.append((label, "black", "5,3"))
    for m in markers:
        if ax.x_lo <= m <= ax.x_hi:
            x = ax.x(m)
            out.append(f'<line x1="{x:.2f}" y1="{_T}" x2="{x:.2f}" y2="{_H - _B}" stroke="#888" '
                       'stroke-dasharray="4,4" stroke-width="0.8"/>')
    out += _legend(legend)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_series_svg(series: Sequence[tuple[str, Sequence[float], Sequence[float], str]], title: str,
                      xlabel: str, ylabel: str) -> str:
    """Generic log-y chart of (label, xs, ys, dash) series, used for N-scaling tables."""
    xs_all = [x for _, xs, _, _ in series for x in xs]
    ys_all = [y for _, _, ys, _ in series for y in ys]
    ax = _Axes(min(xs_all), max(xs_all), *_y_range(ys_all))
    out = _frame(ax, title, xlabel, ylabel)
    legend = []
    for i, (label, xs, ys, dash) in enumerate(series):
        color = _PALETTE[(i // 2) % len(_PALETTE)]
        out += _polylines(ax, xs, ys, color, dash)
        for x, y in zip(xs, ys):
            if math.isfinite(y) and y > 0:
                out.append(f'<circle cx="{ax.x(x):.2f}" cy="{ax.y(y):.2f}" r="2.5" fill="{color}"/>')
        legend.append((label, color, dash))
    out += _legend(legend)
    out.append("</svg>")
    return "\n".join(out) + "\n"


def embed_manifest(svg: str, manifest: RunManifest) -> str:
    """Carry the manifest header inside the SVG as an XML comment after the root tag."""
    head, rest = svg.split("\n", 1)
    lines = [ln.replace("--", "- -") for ln in manifest.header_lines()]
    return head + "\n<!--\n" + "\n".join(lines) + "\n-->\n" + rest


def emit_curve(curves, manifest: RunManifest, fmt: str, out_dir: Path, stem: str, **svg_kw) -> Path:
    """Write one curve (or a labelled list of curves) in one format; returns the path."""
    fmt = fmt.lower()
    if fmt not in FORMATS:
        raise InvalidArgument(f"unknown output format {fmt!r}; choose from {', '.join(FORMATS)}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{stem}.{fmt}"
    if fmt == "csv":
        return write_csv(path, curves, manifest)
    if fmt == "json":
        return write_json(path, curves, manifest)
    path.write_text(embed_manifest(render_curves_svg(curves, **svg_kw), manifest))
    return path
