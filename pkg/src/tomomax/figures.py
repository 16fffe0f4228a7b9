"""Plain SVG drawings: estimator grids and risk profiles.

Only lines, circles, polylines and text are emitted, so no plotting library
is needed.  The CSV files written next to these drawings carry the data.
"""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .estimators import TabulatedEstimator
from .qstate import StateKind

_SIZE = 480
_PAD = 40


def estimator_grid(estimator: TabulatedEstimator) -> np.ndarray:
    """Rebit estimates arranged as an (M_x + 1, M_y + 1, 2) array indexed by (n_x, n_y)."""
    design = estimator.design
    if design.kind is not StateKind.REBIT or len(design.shots) != 2:
        raise ValueError("estimator grids need a rebit design with two measurement groups")
    return estimator.table.reshape(*design.shape, 2)


def boundary_rows(grid: np.ndarray) -> list[np.ndarray]:
    """The four outer grid lines (n_x or n_y equal to 0 or M), as vertex sequences."""
    return [grid[0, :], grid[-1, :], grid[:, 0], grid[:, -1]]


def spacing_variance(grid: np.ndarray) -> float:
    """Normalized variance var(l)/mean(l)^2 of segment lengths along the boundary rows.

    Zero for the uniform linear-inversion grid; large when vertices bunch up
    in clusters ("ripples").
    """
    lengths = np.concatenate([np.linalg.norm(np.diff(row, axis=0), axis=1) for row in boundary_rows(grid)])
    mean = lengths.mean()
    return float(lengths.var() / (mean * mean)) if mean > 0 else 0.0


def _xy(v, lim: float) -> tuple[float, float]:
    scale = (_SIZE - 2 * _PAD) / (2 * lim)
    return _PAD + (v[0] + lim) * scale, _SIZE - _PAD - (v[1] + lim) * scale


def _fmt(x: float) -> str:
    return f"{x:.3f}"


def grid_svg(estimator: TabulatedEstimator, title: str = "") -> str:
    """Grid of estimates: vertices r_hat(n_x, n_y), lines joining neighbours, unit circle."""
    grid = estimator_grid(estimator)
    lim = max(1.05, float(np.abs(grid).max()) * 1.05)
    parts = [_header(title)]
    cx, cy = _xy((0.0, 0.0), lim)
    radius = _xy((1.0, 0.0), lim)[0] - cx
    parts.append(f'<circle cx="{_fmt(cx)}" cy="{_fmt(cy)}" r="{_fmt(radius)}" fill="none" stroke="#999" stroke-width="1.5"/>')
    for line in list(grid) + list(grid.transpose(1, 0, 2)):
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in (_xy(v, lim) for v in line))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="#1f4e9c" stroke-width="0.8"/>')
    for v in grid.reshape(-1, 2):
        a, b = _xy(v, lim)
        parts.append(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="1.6" fill="#1f4e9c"/>')
    parts.append("</svg>\n")
    return "\n".join(parts)


def profile_svg(t: np.ndarray, curves: dict, title: str = "", ylabel: str = "risk") -> str:
    """Line plot of several risk profiles against |r|."""
    palette = ["#1f4e9c", "#c0392b", "#27ae60", "#8e44ad", "#d35400", "#2c3e50"]
    finite = np.concatenate([np.asarray(c)[np.isfinite(c)] for c in curves.values()] + [np.zeros(1)])
    ymax = float(finite.max()) * 1.05 or 1.0
    w = _SIZE - 2 * _PAD

    def xy(x, y):
        return _PAD + x * w, _SIZE - _PAD - min(y, ymax) / ymax * w

    parts = [_header(title)]
    x0, y0 = xy(0, 0)
    x1, y1 = xy(1, ymax)
    parts.append(f'<rect x="{_fmt(x0)}" y="{_fmt(y1)}" width="{_fmt(x1 - x0)}" height="{_fmt(y0 - y1)}" '
                 'fill="none" stroke="#333"/>')
    parts.append(f'<text x="{_fmt((x0 + x1) / 2)}" y="{_fmt(y0 + 28)}" font-size="12" text-anchor="middle">|r|</text>')
    parts.append(f'<text x="{_fmt(x0 - 4)}" y="{_fmt(y1 + 10)}" font-size="10" text-anchor="end">{ymax:.3g}</text>')
    parts.append(f'<text x="{_fmt(x0 - 4)}" y="{_fmt(y0)}" font-size="10" text-anchor="end">0</text>')
    parts.append(f'<text x="12" y="{_fmt((y0 + y1) / 2)}" font-size="12">{escape(ylabel)}</text>')
    for k, (name, vals) in enumerate(curves.items()):
        color = palette[k % len(palette)]
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in (xy(x, y) for x, y in zip(t, vals) if math.isfinite(y)))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(f'<text x="{_fmt(x0 + 8)}" y="{_fmt(y1 + 16 + 14 * k)}" font-size="11" fill="{color}">'
                     f"{escape(name)}</text>")
    parts.append("</svg>\n")
    return "\n".join(parts)


def _header(title: str) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SIZE}" height="{_SIZE}" '
            f'viewBox="0 0 {_SIZE} {_SIZE}">\n<rect width="100%" height="100%" fill="white"/>')
    if title:
        head += f'\n<text x="{_SIZE / 2}" y="20" font-size="14" text-anchor="middle">{escape(title)}</text>'
    return head
