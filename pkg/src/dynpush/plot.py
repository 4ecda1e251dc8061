"""PlotSeries plus a small dependency-free SVG scatter/line renderer."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 40, 55


@dataclass
class PlotSeries:
    label: str
    points: list[tuple[float, float, float, float]] = field(default_factory=list)  # (x, y, y_lo, y_hi)
    log_x: bool = False
    log_y: bool = False

    def __post_init__(self):
        self.points = [tuple(float(v) for v in pt) for pt in self.points]
        for x, y, lo, hi in self.points:
            if not lo <= y <= hi:
                raise ValueError(f"point ({x}, {y}) violates y_lo <= y <= y_hi")

    def to_dat(self) -> str:
        lines = [
            f"# label: {self.label}",
            f"# log_x: {int(self.log_x)}",
            f"# log_y: {int(self.log_y)}",
            "# x y y_lo y_hi",
        ]
        lines += [" ".join(repr(v) for v in pt) for pt in self.points]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_dat(cls, text: str) -> "PlotSeries":
        meta: dict[str, str] = {}
        pts = []
        for no, line in enumerate(text.splitlines(), 1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, sep, val = line[1:].partition(":")
                if sep:
                    meta[key.strip()] = val.strip()
                continue
            vals = line.split()
            if len(vals) != 4:
                raise ValueError(f"line {no}: expected 4 columns, got {len(vals)}")
            pts.append(tuple(float(v) for v in vals))
        return cls(meta.get("label", ""), pts, meta.get("log_x") == "1", meta.get("log_y") == "1")


def _fmt(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _tick_label(v: float) -> str:
    if v != 0 and (abs(v) >= 1e5 or abs(v) < 1e-3):
        return f"{v:.0e}"
    return f"{v:.6g}"


def _ticks(lo: float, hi: float, log: bool) -> list[float]:
    if log:
        a, b = math.floor(math.log2(lo)), math.ceil(math.log2(hi))
        step = max(1, math.ceil((b - a) / 8))
        return [2.0**e for e in range(a, b + 1, step)]
    span = hi - lo
    raw = span / 5
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    out, v = [], start
    while v <= hi + step * 1e-9:
        out.append(round(v, 12))
        v += step
    return out


def _range(vals: list[float], log: bool) -> tuple[float, float]:
    vals = [v for v in vals if math.isfinite(v) and (v > 0 or not log)]
    if not vals:
        return (1.0, 10.0) if log else (0.0, 1.0)
    lo, hi = min(vals), max(vals)
    if log:
        if lo == hi:
            return lo / 2, hi * 2
        return lo, hi
    if lo == hi:
        return lo - 1, hi + 1
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def render_svg(series: PlotSeries, x_label: str = "n", y_label: str = "median completion round") -> str:
    pts = [p for p in series.points if all(math.isfinite(v) for v in p)]
    if series.log_x:
        pts = [p for p in pts if p[0] > 0]
    if series.log_y:
        pts = [p for p in pts if p[2] > 0]
    x0, x1 = _range([p[0] for p in pts], series.log_x)
    y0, y1 = _range([v for p in pts for v in (p[2], p[3])], series.log_y)
    pw = WIDTH - MARGIN_L - MARGIN_R
    ph = HEIGHT - MARGIN_T - MARGIN_B

    def tx(x):
        if series.log_x:
            f = (math.log(x) - math.log(x0)) / (math.log(x1) - math.log(x0))
        else:
            f = (x - x0) / (x1 - x0)
        return MARGIN_L + f * pw

    def ty(y):
        if series.log_y:
            f = (math.log(y) - math.log(y0)) / (math.log(y1) - math.log(y0))
        else:
            f = (y - y0) / (y1 - y0)
        return MARGIN_T + (1 - f) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="22" text-anchor="middle" font-family="sans-serif" font-size="14">{escape(series.label)}</text>',
        f'<line class="axis" x1="{MARGIN_L}" y1="{MARGIN_T + ph}" x2="{MARGIN_L + pw}" y2="{MARGIN_T + ph}" stroke="black"/>',
        f'<line class="axis" x1="{MARGIN_L}" y1="{MARGIN_T}" x2="{MARGIN_L}" y2="{MARGIN_T + ph}" stroke="black"/>',
    ]
    for t in _ticks(x0, x1, series.log_x):
        if not x0 <= t <= x1:
            continue
        x = _fmt(tx(t))
        out.append(f'<line x1="{x}" y1="{MARGIN_T + ph}" x2="{x}" y2="{MARGIN_T + ph + 5}" stroke="black"/>')
        out.append(
            f'<text x="{x}" y="{MARGIN_T + ph + 18}" text-anchor="middle" font-family="sans-serif" font-size="11">{_tick_label(t)}</text>'
        )
    for t in _ticks(y0, y1, series.log_y):
        if not y0 <= t <= y1:
            continue
        y = _fmt(ty(t))
        out.append(f'<line x1="{MARGIN_L - 5}" y1="{y}" x2="{MARGIN_L}" y2="{y}" stroke="black"/>')
        out.append(
            f'<text x="{MARGIN_L - 8}" y="{y}" text-anchor="end" dominant-baseline="middle" font-family="sans-serif" font-size="11">{_tick_label(t)}</text>'
        )
    out.append(
        f'<text x="{MARGIN_L + pw / 2:.0f}" y="{HEIGHT - 12}" text-anchor="middle" font-family="sans-serif" font-size="12">'
        f"{escape(x_label)}{' (log scale)' if series.log_x else ''}</text>"
    )
    out.append(
        f'<text x="16" y="{MARGIN_T + ph / 2:.0f}" text-anchor="middle" font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 16 {MARGIN_T + ph / 2:.0f})">{escape(y_label)}{" (log scale)" if series.log_y else ""}</text>'
    )
    if len(pts) > 1:
        path = " ".join(f"{_fmt(tx(x))},{_fmt(ty(y))}" for x, y, _, _ in sorted(pts))
        out.append(f'<polyline points="{path}" fill="none" stroke="steelblue" stroke-width="1.5"/>')
    for x, y, lo, hi in pts:
        cx = _fmt(tx(x))
        if hi > lo:
            out.append(f'<line x1="{cx}" y1="{_fmt(ty(lo))}" x2="{cx}" y2="{_fmt(ty(hi))}" stroke="gray"/>')
        out.append(f'<circle cx="{cx}" cy="{_fmt(ty(y))}" r="4" fill="steelblue"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def write_plot(series: PlotSeries, svg_path) -> tuple[Path, Path]:
    """Write the SVG and a sibling .dat file; returns both paths."""
    svg_path = Path(svg_path)
    dat_path = svg_path.with_suffix(".dat")
    svg_path.write_text(render_svg(series))
    dat_path.write_text(series.to_dat())
    return svg_path, dat_path
