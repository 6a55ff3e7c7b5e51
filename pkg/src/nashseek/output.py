"""Trace CSV, verdict JSON and minimal SVG plots.

CSV columns, in order (indices 1-based)::

    t, x_<i>_<k>..., y_<i>_<j>_<k>..., gains..., err_consensus, err_nash

gains are ``theta_<i>_<j>`` for fixed/node_adaptive and ``c_<i>_<j>`` then
``cbar_<i>_<j>`` for the edge strategies. Player index varies slowest.
"""

from __future__ import annotations

import csv
import json
from html import escape
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .dynamics import Strategy
from .integrator import SimulationTrace

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#17becf"]


def trace_columns(kind: Strategy, n: int, d: int) -> list[str]:
    cols = ["t"]
    cols += [f"x_{i}_{k}" for i in range(1, n + 1) for k in range(1, d + 1)]
    cols += [f"y_{i}_{j}_{k}" for i in range(1, n + 1) for j in range(1, n + 1) for k in range(1, d + 1)]
    pairs = [(i, j) for i in range(1, n + 1) for j in range(1, n + 1)]
    if kind.is_edge:
        cols += [f"c_{i}_{j}" for i, j in pairs] + [f"cbar_{i}_{j}" for i, j in pairs]
    else:
        cols += [f"theta_{i}_{j}" for i, j in pairs]
    return cols + ["err_consensus", "err_nash"]


def write_trace_csv(path: Path, trace: SimulationTrace) -> list[str]:
    """Write the trace; raises ``ValueError`` if rows and header disagree."""
    kind, n, d = trace.layout
    header = trace_columns(kind, n, d)
    rows = np.column_stack(
        [trace.times, trace.states, trace.diagnostics["err_consensus"], trace.diagnostics["err_nash"]]
    )
    if rows.shape[1] != len(header) or len(set(header)) != len(header):
        raise ValueError(f"trace CSV schema mismatch: {rows.shape[1]} values for {len(header)} columns")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])
    return header


def read_trace_csv(path: Path) -> tuple[list[str], NDArray[np.float64]]:
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader])
    return header, data.reshape(-1, len(header))


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=_json_default) + "\n", encoding="utf-8")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj).__name__}")


def svg_plot(
    series: Sequence[tuple[NDArray[np.float64], NDArray[np.float64]]],
    title: str,
    xlabel: str,
    ylabel: str,
    markers: Sequence[tuple[float, float]] = (),
    width: int = 480,
    height: int = 360,
) -> str:
    """Polylines in one autoscaled viewport; ``markers`` are drawn as crosses."""
    xs = [np.asarray(s[0], float) for s in series] + [np.array([m[0] for m in markers])]
    ys = [np.asarray(s[1], float) for s in series] + [np.array([m[1] for m in markers])]
    allx = np.concatenate([a for a in xs if a.size]) if any(a.size for a in xs) else np.zeros(1)
    ally = np.concatenate([a for a in ys if a.size]) if any(a.size for a in ys) else np.zeros(1)
    x0, x1 = float(allx.min()), float(allx.max())
    y0, y1 = float(ally.min()), float(ally.max())
    if x1 - x0 < 1e-12:
        x0, x1 = x0 - 1.0, x1 + 1.0
    if y1 - y0 < 1e-12:
        y0, y1 = y0 - 1.0, y1 + 1.0
    ml, mr, mt, mb = 60, 15, 30, 45
    pw, ph = width - ml - mr, height - mt - mb

    def px(v):
        return ml + (v - x0) / (x1 - x0) * pw

    def py(v):
        return mt + ph - (v - y0) / (y1 - y0) * ph

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
        f'<text x="{width / 2}" y="18" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<text x="{width / 2}" y="{height - 8}" text-anchor="middle" font-size="12">{escape(xlabel)}</text>',
        f'<text x="14" y="{height / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height / 2})">{escape(ylabel)}</text>',
        f'<text x="{ml}" y="{mt + ph + 14}" font-size="10">{x0:.3g}</text>',
        f'<text x="{ml + pw}" y="{mt + ph + 14}" font-size="10" text-anchor="end">{x1:.3g}</text>',
        f'<text x="{ml - 4}" y="{mt + ph}" font-size="10" text-anchor="end">{y0:.3g}</text>',
        f'<text x="{ml - 4}" y="{mt + 10}" font-size="10" text-anchor="end">{y1:.3g}</text>',
    ]
    for k, (sx, sy) in enumerate(series):
        sx, sy = np.asarray(sx, float), np.asarray(sy, float)
        if sx.size == 0:
            continue
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(sx, sy))
        color = _PALETTE[k % len(_PALETTE)]
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.2"/>')
        parts.append(f'<circle cx="{px(sx[-1]):.2f}" cy="{py(sy[-1]):.2f}" r="2.5" fill="{color}"/>')
    for mx, my in markers:
        cx, cy = px(mx), py(my)
        parts.append(
            f'<path d="M{cx - 5:.2f},{cy - 5:.2f} L{cx + 5:.2f},{cy + 5:.2f} '
            f'M{cx - 5:.2f},{cy + 5:.2f} L{cx + 5:.2f},{cy - 5:.2f}" stroke="black" stroke-width="1.5"/>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_plots(out_dir: Path, prefix: str, trace: SimulationTrace, x_star: NDArray[np.float64]) -> list[Path]:
    """Action phase plot, gains against time, and one estimate panel per player."""
    kind, n, d = trace.layout
    t = trace.times
    x = trace.block("x").reshape(len(t), n, d)
    y = trace.block("y").reshape(len(t), n, n, d)
    xs = np.asarray(x_star, float).reshape(n, d)
    written = []

    def save(name: str, svg: str) -> None:
        path = out_dir / f"{prefix}_{name}.svg"
        path.write_text(svg, encoding="utf-8")
        written.append(path)

    if d >= 2:
        series = [(x[:, i, 0], x[:, i, 1]) for i in range(n)]
        save("actions", svg_plot(series, "player actions", "x_i1", "x_i2", [tuple(p[:2]) for p in xs]))
    else:
        series = [(t, x[:, i, 0]) for i in range(n)]
        save("actions", svg_plot(series, "player actions", "t", "x_i", [(t[-1], float(p[0])) for p in xs]))

    gains = trace.block("gains")
    label = "c_ij, cbar_ij" if kind.is_edge else "theta_ij"
    save("gains", svg_plot([(t, gains[:, k]) for k in range(gains.shape[1])], "adaptive gains", "t", label))

    for i in range(n):
        if d >= 2:
            series = [(y[:, i, j, 0], y[:, i, j, 1]) for j in range(n)]
            svg = svg_plot(series, f"player {i + 1} estimates", "y_ij1", "y_ij2", [tuple(p[:2]) for p in xs])
        else:
            series = [(t, y[:, i, j, 0]) for j in range(n)]
            svg = svg_plot(series, f"player {i + 1} estimates", "t", "y_ij")
        save(f"estimates_p{i + 1}", svg)
    return written
