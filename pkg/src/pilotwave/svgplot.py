"""Deterministic SVG rendering of trajectories and density grids.

SVG is the only plot format: renderer-free, diffable, and byte-for-byte
reproducible for fixed inputs.  Trajectory figures show the sampled path
inside the configuration box with an annotation block carrying the wave
function, horizon and verdict; grid figures shade cells in grayscale.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .integrator import Trajectory
from .wavefunction import TWO_PI, WaveFunctionSpec

_CANVAS = 640
_MARGIN = 42


@dataclass(frozen=True)
class PlotSpec:
    """Rendering parameters for trajectory figures."""

    bounds: float = 4.0
    stroke_width: float = 0.6
    stride: int = 3  # plot every k-th sample; full data stays in the CSV
    annotate: bool = True

    def __post_init__(self) -> None:
        if self.stride < 1:
            raise ValueError("stride must be at least 1")
        if self.bounds <= 0:
            raise ValueError("bounds must be positive")


def _project(v: np.ndarray, bounds: float) -> np.ndarray:
    scale = (_CANVAS - 2 * _MARGIN) / (2.0 * bounds)
    return _MARGIN + (v + bounds) * scale


def _axes(bounds: float) -> list[str]:
    parts = [
        f'<rect x="{_MARGIN}" y="{_MARGIN}" width="{_CANVAS - 2*_MARGIN}" '
        f'height="{_CANVAS - 2*_MARGIN}" fill="white" stroke="black" stroke-width="1"/>'
    ]
    span = _CANVAS - 2 * _MARGIN
    ticks = range(-int(bounds), int(bounds) + 1)
    for value in ticks:
        p = _MARGIN + (value + bounds) * span / (2 * bounds)
        parts.append(
            f'<line x1="{p:.2f}" y1="{_CANVAS - _MARGIN}" x2="{p:.2f}" '
            f'y2="{_CANVAS - _MARGIN + 5}" stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{p:.2f}" y="{_CANVAS - _MARGIN + 18}" font-size="11" '
            f'font-family="monospace" text-anchor="middle">{value}</text>'
        )
        parts.append(
            f'<line x1="{_MARGIN - 5}" y1="{_CANVAS - p:.2f}" x2="{_MARGIN}" '
            f'y2="{_CANVAS - p:.2f}" stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{_MARGIN - 8}" y="{_CANVAS - p + 4:.2f}" font-size="11" '
            f'font-family="monospace" text-anchor="end">{value}</text>'
        )
    return parts


def _annotation(lines: Sequence[str], y0: int) -> list[str]:
    parts = []
    for i, line in enumerate(lines):
        safe = line.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
        parts.append(
            f'<text x="{_MARGIN}" y="{y0 + 14 * i}" font-size="11" '
            f'font-family="monospace">{safe}</text>'
        )
    return parts


def trajectory_svg(
    traj: Trajectory,
    spec: WaveFunctionSpec,
    plot: PlotSpec = PlotSpec(),
    verdict: str | None = None,
    title: str | None = None,
) -> str:
    """Render the sampled path as a polyline with provenance annotations."""
    note_lines: list[str] = []
    if plot.annotate:
        if title:
            note_lines.append(title)
        note_lines += spec.to_text().splitlines()
        note_lines.append(f"digest = {traj.spec_fingerprint[:16]}")
        note_lines.append(
            f"start = ({traj.start[0]:.6g}, {traj.start[1]:.6g})   "
            f"horizon = {traj.horizon / TWO_PI:.6g} T"
        )
        if verdict:
            note_lines.append(f"verdict = {verdict}")
        if traj.error:
            note_lines.append(f"error = {traj.error}")
    height = _CANVAS + (14 * len(note_lines) + 16 if note_lines else 0)

    xs = _project(traj.q1[:: plot.stride], plot.bounds)
    ys = _CANVAS - _project(traj.q2[:: plot.stride], plot.bounds)
    points = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_CANVAS}" height="{height}" '
        f'viewBox="0 0 {_CANVAS} {height}">',
        f'<rect width="{_CANVAS}" height="{height}" fill="white"/>',
    ]
    parts += _axes(plot.bounds)
    parts.append(
        f'<polyline points="{points}" fill="none" stroke="#1f3b73" '
        f'stroke-width="{plot.stroke_width}"/>'
    )
    start_x = _project(np.array([traj.start[0]]), plot.bounds)[0]
    start_y = _CANVAS - _project(np.array([traj.start[1]]), plot.bounds)[0]
    parts.append(f'<circle cx="{start_x:.2f}" cy="{start_y:.2f}" r="3" fill="#c03020"/>')
    parts += _annotation(note_lines, _CANVAS + 14)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def grid_svg(
    values: np.ndarray,
    bounds: float,
    note_lines: Sequence[str] = (),
) -> str:
    """Grayscale cell shading for occupancy or density grids.

    ``values[j, i]`` maps to the cell with q1 along i and q2 along j
    (row 0 at the bottom).
    """
    values = np.asarray(values, dtype=float)
    res_y, res_x = values.shape
    vmax = values.max()
    top = vmax if vmax > 0 else 1.0
    span = _CANVAS - 2 * _MARGIN
    cell_w = span / res_x
    cell_h = span / res_y
    height = _CANVAS + (14 * len(note_lines) + 16 if note_lines else 0)
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_CANVAS}" height="{height}" '
        f'viewBox="0 0 {_CANVAS} {height}">',
        f'<rect width="{_CANVAS}" height="{height}" fill="white"/>',
    ]
    parts += _axes(bounds)
    for j in range(res_y):
        y = _CANVAS - _MARGIN - (j + 1) * cell_h
        for i in range(res_x):
            v = values[j, i]
            if v <= 0:
                continue
            shade = int(round(255 * (1.0 - 0.92 * v / top)))
            color = f"#{shade:02x}{shade:02x}{shade:02x}"
            parts.append(
                f'<rect x="{_MARGIN + i * cell_w:.2f}" y="{y:.2f}" '
                f'width="{cell_w:.2f}" height="{cell_h:.2f}" fill="{color}"/>'
            )
    parts += _annotation(note_lines, _CANVAS + 14)
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_svg(path: str | Path, content: str) -> None:
    Path(path).write_text(content)
