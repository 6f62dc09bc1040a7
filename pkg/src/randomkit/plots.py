"""Minimal standalone SVG charts for simulation reports.

Three chart types cover the reporting needs: per-step metric curves for a
set of procedures (:func:`line_chart`), a procedures-by-steps heatmap for
trade-off rankings (:func:`heatmap`), and mirrored-density violins of the
final imbalance distribution (:func:`violin`).  The output is plain SVG
text with no external references, so the files render anywhere.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["line_chart", "heatmap", "violin", "save_svg"]

# Okabe-Ito palette: distinguishable under common color-vision deficiencies.
PALETTE = (
    "#0072B2", "#E69F00", "#009E73", "#D55E00", "#CC79A7",
    "#56B4E9", "#F0E442", "#000000", "#999999", "#7F3C8D",
)

_VIRIDIS_STOPS = (
    (0.0, (68, 1, 84)),
    (0.25, (59, 82, 139)),
    (0.5, (33, 145, 140)),
    (0.75, (94, 201, 98)),
    (1.0, (253, 231, 37)),
)


def _viridis(t: float) -> str:
    t = min(max(t, 0.0), 1.0)
    for (t0, c0), (t1, c1) in zip(_VIRIDIS_STOPS, _VIRIDIS_STOPS[1:]):
        if t <= t1:
            f = 0.0 if t1 == t0 else (t - t0) / (t1 - t0)
            rgb = tuple(round(a + f * (b - a)) for a, b in zip(c0, c1))
            return "#%02x%02x%02x" % rgb
    return "#fde725"


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _nice_ticks(lo: float, hi: float, count: int = 5) -> list[float]:
    """Round tick positions on the 1-2-5 ladder covering [lo, hi]."""
    if not math.isfinite(lo) or not math.isfinite(hi):
        return [0.0]
    if hi <= lo:
        hi = lo + (abs(lo) if lo else 1.0)
    span = hi - lo
    raw = span / max(count - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    for m in (1.0, 2.0, 5.0, 10.0):
        if raw <= m * mag:
            step = m * mag
            break
    start = math.ceil(lo / step) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * span:
        ticks.append(0.0 if abs(t) < 1e-12 * span else t)
        t += step
    return ticks or [lo]


class _Canvas:
    def __init__(self, width: int, height: int, title: str):
        self.width = width
        self.height = height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
            f'height="{height}" viewBox="0 0 {width} {height}" '
            f'font-family="Helvetica, Arial, sans-serif">',
            f'<rect width="{width}" height="{height}" fill="white"/>',
        ]
        if title:
            self.parts.append(
                f'<text x="{width / 2:.1f}" y="22" text-anchor="middle" '
                f'font-size="15" font-weight="bold">{escape(title)}</text>'
            )

    def add(self, fragment: str) -> None:
        self.parts.append(fragment)

    def text(
        self, x: float, y: float, s: str, size: int = 11, anchor: str = "middle",
        extra: str = "",
    ) -> None:
        self.add(
            f'<text x="{x:.1f}" y="{y:.1f}" text-anchor="{anchor}" '
            f'font-size="{size}"{extra}>{escape(s)}</text>'
        )

    def render(self) -> str:
        return "\n".join(self.parts + ["</svg>"])


class _Frame:
    """Plot area with linear data-to-pixel mapping and drawn axes."""

    def __init__(self, canvas, x0, y0, x1, y1, xlo, xhi, ylo, yhi):
        self.c = canvas
        self.x0, self.y0, self.x1, self.y1 = x0, y0, x1, y1
        if xhi <= xlo:
            xhi = xlo + 1.0
        if yhi <= ylo:
            yhi = ylo + (abs(ylo) if ylo else 1.0)
        self.xlo, self.xhi, self.ylo, self.yhi = xlo, xhi, ylo, yhi

    def px(self, x: float) -> float:
        return self.x0 + (x - self.xlo) / (self.xhi - self.xlo) * (self.x1 - self.x0)

    def py(self, y: float) -> float:
        return self.y1 - (y - self.ylo) / (self.yhi - self.ylo) * (self.y1 - self.y0)

    def axes(self, xlabel: str, ylabel: str, x_integer: bool = False) -> None:
        c = self.c
        c.add(
            f'<rect x="{self.x0}" y="{self.y0}" width="{self.x1 - self.x0}" '
            f'height="{self.y1 - self.y0}" fill="none" stroke="#444"/>'
        )
        xticks = _nice_ticks(self.xlo, self.xhi)
        if x_integer:
            xticks = sorted({round(t) for t in xticks if abs(t - round(t)) < 1e-9})
        for t in xticks:
            if not (self.xlo - 1e-9 <= t <= self.xhi + 1e-9):
                continue
            x = self.px(t)
            c.add(
                f'<line x1="{x:.1f}" y1="{self.y1}" x2="{x:.1f}" '
                f'y2="{self.y1 + 4}" stroke="#444"/>'
            )
            c.text(x, self.y1 + 17, _fmt(t))
        for t in _nice_ticks(self.ylo, self.yhi):
            if not (self.ylo - 1e-9 <= t <= self.yhi + 1e-9):
                continue
            y = self.py(t)
            c.add(
                f'<line x1="{self.x0 - 4}" y1="{y:.1f}" x2="{self.x0}" '
                f'y2="{y:.1f}" stroke="#444"/>'
            )
            c.text(self.x0 - 7, y + 4, _fmt(t), anchor="end")
            c.add(
                f'<line x1="{self.x0}" y1="{y:.1f}" x2="{self.x1}" y2="{y:.1f}" '
                f'stroke="#ddd" stroke-dasharray="3,3"/>'
            )
        if xlabel:
            c.text((self.x0 + self.x1) / 2, self.y1 + 36, xlabel, size=12)
        if ylabel:
            ym = (self.y0 + self.y1) / 2
            c.add(
                f'<text x="16" y="{ym:.1f}" text-anchor="middle" font-size="12" '
                f'transform="rotate(-90 16 {ym:.1f})">{escape(ylabel)}</text>'
            )


def line_chart(
    series: Sequence,
    title: str = "",
    ylabel: str = "",
    xlabel: str = "allocation step",
    width: int = 880,
    height: int = 460,
) -> str:
    """Per-step curves for several procedures.

    ``series`` holds objects with ``label``, ``step``, ``estimate`` and
    optional ``se`` attributes (standard errors become a shaded band).
    """
    if not series:
        raise ValueError("no series to plot")
    legend_w = 150
    ylo = min(float(np.min(s.estimate)) for s in series)
    yhi = max(float(np.max(s.estimate)) for s in series)
    for s in series:
        if s.se is not None:
            ylo = min(ylo, float(np.min(np.asarray(s.estimate) - 2 * np.asarray(s.se))))
            yhi = max(yhi, float(np.max(np.asarray(s.estimate) + 2 * np.asarray(s.se))))
    if ylo > 0 and ylo < 0.35 * yhi:
        ylo = 0.0
    pad = 0.06 * (yhi - ylo) if yhi > ylo else max(abs(yhi), 1.0) * 0.1
    c = _Canvas(width, height, title)
    fr = _Frame(
        c, 62, 36, width - legend_w - 16, height - 52,
        min(float(np.min(s.step)) for s in series),
        max(float(np.max(s.step)) for s in series),
        ylo - (pad if ylo else 0.0), yhi + pad,
    )
    fr.axes(xlabel, ylabel, x_integer=True)
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        xs = np.asarray(s.step, dtype=np.float64)
        ys = np.asarray(s.estimate, dtype=np.float64)
        if s.se is not None:
            se = np.asarray(s.se, dtype=np.float64)
            upper = [f"{fr.px(x):.1f},{fr.py(y):.1f}" for x, y in zip(xs, ys + 2 * se)]
            lower = [
                f"{fr.px(x):.1f},{fr.py(y):.1f}"
                for x, y in zip(xs[::-1], (ys - 2 * se)[::-1])
            ]
            c.add(
                f'<polygon points="{" ".join(upper + lower)}" fill="{color}" '
                f'opacity="0.15" stroke="none"/>'
            )
        pts = " ".join(f"{fr.px(x):.1f},{fr.py(y):.1f}" for x, y in zip(xs, ys))
        c.add(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.8"/>'
        )
        ly = 46 + 20 * i
        lx = width - legend_w
        c.add(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="3"/>'
        )
        c.text(lx + 28, ly, str(s.label), anchor="start")
    return c.render()


def heatmap(
    row_labels: Sequence[str],
    steps: Sequence[int],
    values: np.ndarray,
    title: str = "",
    width: int = 880,
    height: Optional[int] = None,
) -> str:
    """Procedures-by-steps heatmap (viridis scale, per-matrix range)."""
    values = np.asarray(values, dtype=np.float64)
    rows, cols = values.shape
    if rows != len(row_labels) or cols != len(steps):
        raise ValueError("heatmap dimensions do not match labels")
    if height is None:
        height = 80 + 26 * rows
    left, top, right, bottom = 120, 40, 60, 40
    c = _Canvas(width, height, title)
    cw = (width - left - right) / cols
    ch = (height - top - bottom) / rows
    finite = values[np.isfinite(values)]
    vlo = float(finite.min()) if finite.size else 0.0
    vhi = float(finite.max()) if finite.size else 1.0
    span = (vhi - vlo) or 1.0
    for r in range(rows):
        c.text(left - 6, top + (r + 0.65) * ch, str(row_labels[r]), anchor="end")
        for s in range(cols):
            v = values[r, s]
            color = _viridis((v - vlo) / span) if math.isfinite(v) else "#ffffff"
            x, y = left + s * cw, top + r * ch
            c.add(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{cw:.2f}" height="{ch:.2f}" '
                f'fill="{color}" stroke="white" stroke-width="0.5">'
                f"<title>{escape(str(row_labels[r]))}, step {steps[s]}: "
                f"{_fmt(v)}</title></rect>"
            )
    shown = {0, cols - 1, *range(0, cols, max(1, cols // 10))}
    for s in sorted(shown):
        c.text(left + (s + 0.5) * cw, height - bottom + 16, str(steps[s]))
    c.text((left + width - right) / 2, height - bottom + 32, "allocation step", size=12)
    # color scale
    bx = width - right + 14
    for i in range(60):
        t = 1.0 - i / 59
        c.add(
            f'<rect x="{bx}" y="{top + i * (height - top - bottom) / 60:.2f}" '
            f'width="12" height="{(height - top - bottom) / 60 + 0.5:.2f}" '
            f'fill="{_viridis(t)}"/>'
        )
    c.text(bx + 16, top + 8, _fmt(vhi), anchor="start", size=10)
    c.text(bx + 16, height - bottom, _fmt(vlo), anchor="start", size=10)
    return c.render()


def _kde(values: np.ndarray, grid: np.ndarray) -> np.ndarray:
    """Gaussian kernel density with Silverman's bandwidth."""
    n = values.size
    std = float(values.std(ddof=1)) if n > 1 else 0.0
    q75, q25 = np.percentile(values, [75, 25])
    iqr = float(q75 - q25)
    scale = min(std, iqr / 1.34) if iqr > 0 else std
    h = 0.9 * scale * n ** (-0.2) if scale > 0 else 1.0
    z = (grid[:, None] - values[None, :]) / h
    return np.exp(-0.5 * z * z).sum(axis=1) / (n * h * math.sqrt(2 * math.pi))


def violin(
    groups: Sequence[tuple[str, np.ndarray]],
    title: str = "",
    ylabel: str = "final imbalance",
    width: int = 880,
    height: int = 460,
    max_points: int = 4000,
) -> str:
    """Mirrored-density violins, one per procedure."""
    if not groups:
        raise ValueError("no groups to plot")
    sampled = []
    for label, values in groups:
        v = np.asarray(values, dtype=np.float64)
        if v.size > max_points:
            idx = np.linspace(0, v.size - 1, max_points).astype(np.int64)
            v = np.sort(v)[idx]
        sampled.append((label, v))
    ylo = min(float(v.min()) for _, v in sampled)
    yhi = max(float(v.max()) for _, v in sampled)
    pad = 0.08 * (yhi - ylo) if yhi > ylo else 1.0
    c = _Canvas(width, height, title)
    fr = _Frame(c, 62, 36, width - 20, height - 52, 0, len(sampled), ylo - pad, yhi + pad)
    fr.axes("", ylabel)
    slot = (fr.x1 - fr.x0) / len(sampled)
    half = 0.42 * slot
    grid = np.linspace(ylo - pad, yhi + pad, 120)
    for i, (label, v) in enumerate(sampled):
        cx = fr.x0 + (i + 0.5) * slot
        color = PALETTE[i % len(PALETTE)]
        if float(v.max()) > float(v.min()):
            dens = _kde(v, grid)
            dmax = dens.max() or 1.0
            right = [
                f"{cx + half * d / dmax:.1f},{fr.py(g):.1f}"
                for g, d in zip(grid, dens)
            ]
            left = [
                f"{cx - half * d / dmax:.1f},{fr.py(g):.1f}"
                for g, d in zip(grid[::-1], dens[::-1])
            ]
            c.add(
                f'<polygon points="{" ".join(right + left)}" fill="{color}" '
                f'opacity="0.45" stroke="{color}"/>'
            )
        else:
            y = fr.py(float(v[0]))
            c.add(
                f'<line x1="{cx - half:.1f}" y1="{y:.1f}" x2="{cx + half:.1f}" '
                f'y2="{y:.1f}" stroke="{color}" stroke-width="3"/>'
            )
        med = fr.py(float(np.median(v)))
        c.add(
            f'<line x1="{cx - 6:.1f}" y1="{med:.1f}" x2="{cx + 6:.1f}" '
            f'y2="{med:.1f}" stroke="black" stroke-width="2"/>'
        )
        c.text(cx, fr.y1 + 17, str(label), size=10)
    return c.render()


def save_svg(svg_text: str, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(svg_text)
        if not svg_text.endswith("\n"):
            fh.write("\n")
