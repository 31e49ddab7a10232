"""Trajectory CSV and a small hand-written SVG chart."""
from __future__ import annotations

import csv
import math

import numpy as np

from .sim import TrajectoryLog

__all__ = ["CSV_HEADER", "csv_columns", "write_csv", "read_csv", "render_svg", "write_svg"]

CSV_HEADER = "# robust-cbf-traj v1"


def csv_columns(n: int, m: int, p: int) -> list[str]:
    return (
        ["t"]
        + [f"xA_{i + 1}" for i in range(n)]
        + [f"xR_{i + 1}" for i in range(n)]
        + [f"u_{i + 1}" for i in range(m)]
        + ["h", "hdot", "margin", "lambda", "status", "eta"]
        + [f"theta_hat_{i + 1}" for i in range(p)]
        + ["slack"]
    )


def _num(x) -> str:
    x = float(x)
    return repr(x) if math.isfinite(x) else ""


def write_csv(log: TrajectoryLog, fh) -> None:
    """Write ``log`` to the open text stream ``fh``; missing values are empty fields."""
    first = log.records[0]
    n, m, p = first.xA.size, first.u.size, first.theta_hat.size
    fh.write(CSV_HEADER + "\n")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(csv_columns(n, m, p))
    for r in log.records:
        w.writerow(
            [_num(r.t)]
            + [_num(v) for v in r.xA]
            + [_num(v) for v in r.xR]
            + [_num(v) for v in r.u]
            + [_num(r.h), _num(r.hdot), _num(r.margin), _num(r.lam), r.status.value, _num(r.eta)]
            + [_num(v) for v in r.theta_hat]
            + [_num(r.slack)]
        )


def read_csv(path) -> tuple[list[str], list[dict]]:
    with open(path, newline="", encoding="utf-8") as fh:
        head = fh.readline().rstrip("\n")
        if head != CSV_HEADER:
            raise ValueError(f"unexpected header line {head!r}")
        rows = list(csv.DictReader(fh))
    cols = list(rows[0].keys()) if rows else []
    return cols, rows


def _polyline(t, y, x0, y0, w, h, lo, hi, color):
    tmax = t[-1] if t[-1] > t[0] else t[0] + 1.0
    span = hi - lo if hi > lo else 1.0
    pts = " ".join(
        f"{x0 + w * (ti - t[0]) / (tmax - t[0]):.2f},{y0 + h - h * (yi - lo) / span:.2f}" for ti, yi in zip(t, y)
    )
    return f'<polyline fill="none" stroke="{color}" stroke-width="1.5" points="{pts}"/>'


def render_svg(log: TrajectoryLog, width: int = 640, height: int = 400) -> str:
    """Two stacked panels: ``h(t)`` on top, ``eta(t)`` below."""
    t = log.column("t")
    series = [("h", log.column("h"), "#1f77b4"), ("eta", log.column("eta"), "#d62728")]
    pad, gap = 50, 30
    ph = (height - 2 * pad - gap) / 2
    pw = width - 2 * pad
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    for k, (name, y, color) in enumerate(series):
        y0 = pad + k * (ph + gap)
        lo, hi = float(np.min(y)), float(np.max(y))
        if name == "h":
            lo = min(lo, 0.0)
        parts.append(f'<rect x="{pad}" y="{y0:.2f}" width="{pw}" height="{ph:.2f}" fill="none" stroke="#444"/>')
        if name == "h" and hi > lo:
            zy = y0 + ph - ph * (0.0 - lo) / (hi - lo)
            parts.append(
                f'<line x1="{pad}" y1="{zy:.2f}" x2="{pad + pw}" y2="{zy:.2f}" stroke="#999" stroke-dasharray="4 3"/>'
            )
        parts.append(_polyline(t, y, pad, y0, pw, ph, lo, hi, color))
        parts.append(f'<text x="{pad - 6}" y="{y0 + 10:.2f}" text-anchor="end">{hi:.3g}</text>')
        parts.append(f'<text x="{pad - 6}" y="{y0 + ph:.2f}" text-anchor="end">{lo:.3g}</text>')
        parts.append(f'<text x="{pad + 6}" y="{y0 - 6:.2f}" fill="{color}">{name}(t)</text>')
    yb = height - pad + 16
    parts.append(f'<text x="{pad}" y="{yb}" text-anchor="middle">{t[0]:.3g}</text>')
    parts.append(f'<text x="{pad + pw}" y="{yb}" text-anchor="middle">{t[-1]:.3g}</text>')
    parts.append(f'<text x="{pad + pw / 2}" y="{yb}" text-anchor="middle">t [s]</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(log: TrajectoryLog, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(render_svg(log))
