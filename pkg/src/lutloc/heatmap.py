"""Heat-map export of per-entry ranking values for 1D and 2D maps.

Entries no run ever read are written as empty CSV cells and drawn in blue.
"""

from __future__ import annotations

import csv
import io
import math
from typing import Iterable, Mapping, Sequence

import numpy as np

from .lutmap import LookupMap
from .rankers import RankingResult
from .traces import TraceRun

__all__ = ["HeatmapError", "heatmap_grid", "heatmap_csv", "parse_heatmap_csv", "heatmap_svg",
           "emit_heatmap"]

LOW = (229, 245, 224)      # light green
HIGH = (139, 0, 0)         # dark red
SENTINEL = "#3060d0"


class HeatmapError(ValueError):
    pass


def heatmap_grid(ranking: RankingResult, runs: Iterable[TraceRun], lut: LookupMap,
                 slices: Mapping[int, int] | None = None
                 ) -> tuple[list[tuple[float, ...]], np.ndarray]:
    """Scores on the map grid with NaN for never-read entries.

    ``slices`` fixes some axes to one index each; at most two free axes may
    remain.
    """
    if tuple(ranking.shape) != lut.shape:
        raise HeatmapError(f"ranking shape {ranking.shape} does not match map {lut.shape}")
    grid = np.asarray(ranking.scores, dtype=float).reshape(lut.shape).copy()
    seen = np.zeros(lut.size, dtype=bool)
    for r in runs:
        for q in r.queries:
            for e in q.depends:
                seen[lut.ravel(e)] = True
    grid[~seen.reshape(lut.shape)] = np.nan
    slices = dict(slices or {})
    for ax, i in slices.items():
        if not 0 <= ax < lut.ndim or not 0 <= i < lut.shape[ax]:
            raise HeatmapError(f"bad slice {ax}={i} for map of shape {lut.shape}")
    free = [k for k in range(lut.ndim) if k not in slices]
    if len(free) > 2:
        raise HeatmapError(
            f"map has {lut.ndim} dimensions; fix all but two axes with --slice AXIS=INDEX")
    if not free:
        raise HeatmapError("at least one axis must stay free")
    sel = tuple(slices.get(k, slice(None)) for k in range(lut.ndim))
    return [lut.axes[k].breakpoints for k in free], grid[sel]


def _cell(x: float) -> str:
    if math.isnan(x):
        return ""
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(float(x))


def heatmap_csv(axes: Sequence[Sequence[float]], grid: np.ndarray) -> str:
    """1D: breakpoint row then value row. 2D: first-axis breakpoints down the
    left column, second-axis breakpoints across the header row."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if grid.ndim == 1:
        w.writerow([repr(float(b)) for b in axes[0]])
        w.writerow([_cell(x) for x in grid])
    else:
        w.writerow([""] + [repr(float(b)) for b in axes[1]])
        for b, row in zip(axes[0], grid):
            w.writerow([repr(float(b))] + [_cell(x) for x in row])
    return buf.getvalue()


def parse_heatmap_csv(text: str) -> tuple[list[tuple[float, ...]], np.ndarray]:
    """Inverse of :func:`heatmap_csv`; empty cells come back as NaN."""
    rows = [r for r in csv.reader(io.StringIO(text))]
    rows = [r for r in rows if r]

    def val(s):
        return math.nan if s == "" else float(s)

    if len(rows) == 2 and rows[0][0] != "":
        return [tuple(float(x) for x in rows[0])], np.array([val(x) for x in rows[1]])
    ax1 = tuple(float(x) for x in rows[0][1:])
    ax0 = tuple(float(r[0]) for r in rows[1:])
    grid = np.array([[val(x) for x in r[1:]] for r in rows[1:]])
    return [ax0, ax1], grid


def _color(frac: float) -> str:
    c = [round(lo + (hi - lo) * frac) for lo, hi in zip(LOW, HIGH)]
    return "#{:02x}{:02x}{:02x}".format(*c)


def heatmap_svg(axes: Sequence[Sequence[float]], grid: np.ndarray, title: str = "") -> str:
    """Self-contained SVG: one rectangle per entry plus a color bar."""
    g = grid if grid.ndim == 2 else grid[None, :]
    rows, cols = g.shape
    cell = max(4, min(24, 720 // max(rows, cols)))
    left, top = 60, 30
    width = left + cols * cell + 120
    height = max(top + rows * cell + 40, 220)
    finite = g[np.isfinite(g)]
    vmin = float(finite.min()) if finite.size else 0.0
    vmax = float(finite.max()) if finite.size else 0.0
    span = vmax - vmin

    def frac(x):
        if math.isinf(x):
            return 1.0 if x > 0 else 0.0
        return (x - vmin) / span if span > 0 else 1.0

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="10">']
    if title:
        out.append(f'<text x="{left}" y="16">{title}</text>')
    for i in range(rows):
        for j in range(cols):
            x = g[i, j]
            fill = SENTINEL if math.isnan(x) else _color(frac(x))
            out.append(f'<rect x="{left + j * cell}" y="{top + i * cell}" width="{cell}" '
                       f'height="{cell}" fill="{fill}"/>')
    # axis labels at the ends
    if grid.ndim == 2:
        out.append(f'<text x="4" y="{top + cell}">{axes[0][0]:g}</text>')
        out.append(f'<text x="4" y="{top + rows * cell}">{axes[0][-1]:g}</text>')
        xs = axes[1]
    else:
        xs = axes[0]
    out.append(f'<text x="{left}" y="{top + rows * cell + 14}">{xs[0]:g}</text>')
    out.append(f'<text x="{left + (cols - 1) * cell}" y="{top + rows * cell + 14}">{xs[-1]:g}</text>')
    # color bar
    bx, by, bh = left + cols * cell + 20, top, 150
    if span > 0:
        steps = 30
        for k in range(steps):
            f = 1.0 - k / (steps - 1)
            out.append(f'<rect x="{bx}" y="{by + k * bh / steps:.2f}" width="14" '
                       f'height="{bh / steps + 0.5:.2f}" fill="{_color(f)}"/>')
        out.append(f'<text x="{bx + 18}" y="{by + 8}">{vmax:.4g}</text>')
        out.append(f'<text x="{bx + 18}" y="{by + bh}">{vmin:.4g}</text>')
    else:
        out.append(f'<rect x="{bx}" y="{by}" width="14" height="14" fill="{_color(1.0)}"/>')
        out.append(f'<text x="{bx + 18}" y="{by + 11}">{vmax:.4g}</text>')
    out.append(f'<rect x="{bx}" y="{by + bh + 12}" width="14" height="14" fill="{SENTINEL}"/>')
    out.append(f'<text x="{bx + 18}" y="{by + bh + 23}">not accessed</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_heatmap(ranking: RankingResult, runs: Iterable[TraceRun], lut: LookupMap,
                 slices: Mapping[int, int] | None = None, title: str = "") -> tuple[str, str]:
    """CSV and SVG text for a ranking."""
    axes, grid = heatmap_grid(ranking, runs, lut, slices)
    return heatmap_csv(axes, grid), heatmap_svg(axes, grid, title)
