"""Analytic shape presets and closed-polyline resampling."""

from __future__ import annotations

import numpy as np

from .dyadic import DyadicFunction


def circle(n: int, radius: float = 1.0, center=(0.0, 0.0)) -> np.ndarray:
    """``n`` points at angles 2 pi i / n."""
    t = 2 * np.pi * np.arange(n) / n
    return np.column_stack([center[0] + radius * np.cos(t), center[1] + radius * np.sin(t)])


def ellipse(n: int, a: float = 1.4, b: float = 0.8, center=(0.0, 0.0)) -> np.ndarray:
    """Affine image of :func:`circle` with semi-axes ``a`` (x) and ``b`` (y)."""
    return circle(n) * np.array([a, b]) + np.asarray(center, dtype=float)


def circle_curve(x):
    """Unit circle parameterized over S_1 = [0, 1)."""
    t = 2 * np.pi * np.asarray(x)
    return np.column_stack([np.cos(t), np.sin(t)])


def circle_cells(level: int, samples_per_cell: int = 16) -> DyadicFunction:
    """Cell averages of the unit circle on the level-``level`` dyadic partition."""
    return DyadicFunction.from_callable(circle_curve, level, samples_per_cell)


def polyline_length(points: np.ndarray) -> float:
    pts = np.asarray(points, dtype=float)
    seg = np.diff(np.vstack([pts, pts[:1]]), axis=0)
    return float(np.sum(np.linalg.norm(seg, axis=1)))


def resample_closed(polyline, npoints: int) -> np.ndarray:
    """``npoints`` points at the centers of equal chord-length intervals of a closed polyline."""
    pts = np.asarray(polyline, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 3:
        raise ValueError("need a closed polyline with at least 3 points")
    if npoints < 1:
        raise ValueError("npoints must be >= 1")
    closed = np.vstack([pts, pts[:1]])
    seglen = np.linalg.norm(np.diff(closed, axis=0), axis=1)
    total = seglen.sum()
    if not total > 0:
        raise ValueError("degenerate polyline: zero total length")
    cum = np.concatenate([[0.0], np.cumsum(seglen)])
    targets = (np.arange(npoints) + 0.5) / npoints * total
    idx = np.clip(np.searchsorted(cum, targets, side="right") - 1, 0, len(seglen) - 1)
    frac = (targets - cum[idx]) / np.where(seglen[idx] > 0, seglen[idx], 1.0)
    return closed[idx] + frac[:, None] * (closed[idx + 1] - closed[idx])


def resample_arclength(polyline, level: int) -> DyadicFunction:
    """Resample a closed polyline at the 2**level dyadic cell centers of its chord-length parameter."""
    return DyadicFunction(resample_closed(polyline, 2**level))


def polyline_curve(polyline):
    """Closed polyline as a map [0, 1) -> R^d, parameterized proportionally to chord length."""
    pts = np.asarray(polyline, dtype=float)
    closed = np.vstack([pts, pts[:1]])
    cum = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(closed, axis=0), axis=1))])
    u = cum / cum[-1]

    def curve(x):
        x = np.mod(np.asarray(x, dtype=float), 1.0)
        return np.column_stack([np.interp(x, u, closed[:, c]) for c in range(closed.shape[1])])
    return curve


def read_polyline(path) -> np.ndarray:
    """Whitespace- or comma-separated ``x y`` rows."""
    with open(path, encoding="utf-8") as fh:
        text = fh.read().replace(",", " ")
    arr = np.array([[float(v) for v in line.split()] for line in text.splitlines() if line.strip()])
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise ValueError(f"{path}: expected rows of at least two coordinates")
    return arr
