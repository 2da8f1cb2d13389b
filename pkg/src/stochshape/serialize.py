"""Deterministic CSV, JSON and SVG output."""

from __future__ import annotations

import csv
import json
from xml.sax.saxutils import quoteattr

import numpy as np

from .dynamics import Trajectory


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def write_trajectory(traj: Trajectory, path) -> None:
    """One row per (time, landmark), time-major, header ``t,i,q0..,p0..``."""
    q = np.asarray(traj.q)
    if q.ndim != 3:
        raise ValueError(f"expected an unbatched trajectory of shape (times, n, d), got {q.shape}")
    _, n, d = q.shape
    header = ["t", "i"] + [f"q{c}" for c in range(d)] + [f"p{c}" for c in range(d)]
    try:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for j, t in enumerate(traj.times):
                for i in range(n):
                    w.writerow([_fmt(t), i] + [_fmt(v) for v in traj.q[j, i]] + [_fmt(v) for v in traj.p[j, i]])
    except OSError as exc:
        raise OSError(f"{path}: cannot write trajectory ({exc.strerror})") from exc


def read_trajectory(path, w=None) -> Trajectory:
    """Inverse of :func:`write_trajectory`; weights default to 1."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    d = (len(header) - 2) // 2
    if header != ["t", "i"] + [f"q{c}" for c in range(d)] + [f"p{c}" for c in range(d)]:
        raise ValueError(f"{path}: unexpected header {header}")
    arr = np.array([[float(v) for v in r] for r in body]).reshape(-1, 2 + 2 * d)
    n = int(arr[:, 1].max()) + 1
    arr = arr.reshape(-1, n, 2 + 2 * d)
    q, p = arr[..., 2:2 + d], arr[..., 2 + d:]
    return Trajectory(arr[:, 0, 0], q, p, np.ones(n) if w is None else np.asarray(w, dtype=float))


def write_table(path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in r])


def to_jsonable(obj):
    """Plain JSON types from numpy scalars/arrays and nested containers."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    return obj


def write_json(path, obj) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _color(u: float) -> str:
    start, end = np.array([31, 119, 180]), np.array([214, 39, 40])
    r, g, b = np.rint(start + u * (end - start)).astype(int)
    return f"#{r:02x}{g:02x}{b:02x}"


def write_snapshot_svg(traj: Trajectory, path, stride: int = 1) -> None:
    """Closed polylines of every ``stride``-th frame (and the last), colored from first to last."""
    q = np.asarray(traj.q)
    if q.ndim != 3 or q.shape[-1] != 2:
        raise ValueError(f"SVG snapshots need an unbatched d = 2 trajectory, got shape {q.shape}")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    frames = list(range(0, len(q), stride))
    if frames[-1] != len(q) - 1:
        frames.append(len(q) - 1)
    pts = q[frames]
    lo, hi = pts.reshape(-1, 2).min(axis=0), pts.reshape(-1, 2).max(axis=0)
    span = max(float(np.max(hi - lo)), 1e-12)
    margin = 0.1 * span
    x0, y0 = lo[0] - margin, -hi[1] - margin
    width, height = hi[0] - lo[0] + 2 * margin, hi[1] - lo[1] + 2 * margin
    stroke = span / 400
    lines = ['<?xml version="1.0" encoding="UTF-8"?>',
             f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="{x0:.6g} {y0:.6g} {width:.6g} {height:.6g}">']
    last = max(len(q) - 1, 1)
    for f in frames:
        coords = " ".join(f"{x:.6g},{-y:.6g}" for x, y in q[f])
        t = _fmt(traj.times[f])
        lines.append(f'<polygon data-t={quoteattr(t)} points="{coords}" fill="none" '
                     f'stroke="{_color(f / last)}" stroke-width="{stroke:.6g}"/>')
    lines.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
