"""Confinement and coverage diagnostics for sampled trajectories.

Confinement is judged from the growth of the trajectory's bounding box at
checkpoint horizons: boxes of confined trajectories saturate early, while
unconfined ones keep growing.  There is no sharp dividing line, so the
classifier's thresholds are explicit parameters reported with every
verdict.  Occupancy grids quantify how much of the Born-significant region
a trajectory actually visits, and cohort statistics compare the regions
explored by bundles of neighboring trajectories.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .integrator import Trajectory
from .wavefunction import TWO_PI, PilotWaveError, WaveFunctionSpec, time_averaged_density_grid

# checkpoint horizons used throughout, in periods
CHECKPOINT_PERIODS = (25, 100, 200, 500, 1000, 2000, 3000)

# defaults for the confinement classifier
TAIL_GROWTH_THRESHOLD = 0.02
SUPPORT_SCALE = 8.0 * 4.0 / math.sqrt(2.0)  # reference width+height of the full support
SUPPORT_FRACTION = 0.8

CONFINED = "Confined"
UNCONFINED = "Unconfined"
INDETERMINATE = "Indeterminate"


class OriginCrossingError(PilotWaveError):
    """Polar angle undefined: a sample sits (numerically) on the origin."""


@dataclass(frozen=True)
class BoundingBoxSeries:
    """Widths and heights of the excursion box up to each checkpoint."""

    checkpoints: tuple[float, ...]
    widths: tuple[float, ...]
    heights: tuple[float, ...]

    @property
    def extents(self) -> tuple[float, ...]:
        return tuple(w + h for w, h in zip(self.widths, self.heights))


@dataclass(frozen=True)
class ConfinementVerdict:
    label: str
    growth_tail: float
    saturation_checkpoint: float | None
    thresholds: dict = field(default_factory=dict)


@dataclass
class OccupancyGrid:
    """Per-cell visit counts over the square [-L, L]^2."""

    bounds: float
    resolution: int
    counts: np.ndarray
    outside: int

    @property
    def visited(self) -> np.ndarray:
        return self.counts > 0

    @property
    def cell_size(self) -> float:
        return 2.0 * self.bounds / self.resolution

    def cell_centers(self) -> np.ndarray:
        L, r = self.bounds, self.resolution
        return -L + (np.arange(r) + 0.5) * (2.0 * L / r)

    def write_csv(self, path: str | Path) -> None:
        lines = [f"# occupancy grid: bounds={self.bounds:.12g} resolution={self.resolution} outside={self.outside}"]
        for row in self.counts:
            lines.append(",".join(str(int(v)) for v in row))
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class CohortReport:
    """Pairwise separation and overlap statistics for neighboring trajectories."""

    center: tuple[float, float]
    edge: float
    n_trajectories: int
    max_pairwise_distance: float
    max_distance_time: float
    max_distance_pair: tuple[int, int]
    final_distances: np.ndarray
    mean_overlap: float

    @property
    def max_final_distance(self) -> float:
        return float(self.final_distances.max())

    @property
    def min_final_distance(self) -> float:
        n = self.final_distances.shape[0]
        off = self.final_distances[~np.eye(n, dtype=bool)]
        return float(off.min())


def bounding_box_series(
    traj: Trajectory,
    checkpoints: Sequence[float] | None = None,
) -> BoundingBoxSeries:
    """Box width/height over all samples with t <= checkpoint.

    ``checkpoints`` are absolute times; the default takes the standard
    checkpoint periods that fit inside the trajectory horizon.
    """
    if checkpoints is None:
        checkpoints = [p * TWO_PI for p in CHECKPOINT_PERIODS if p * TWO_PI <= traj.horizon * (1 + 1e-12)]
        if not checkpoints:
            checkpoints = [traj.horizon]
    horizon = traj.horizon
    for cp in checkpoints:
        if cp > horizon * (1 + 1e-12):
            raise ValueError(f"checkpoint {cp} beyond trajectory horizon {horizon}")
    hi1 = np.maximum.accumulate(traj.q1)
    lo1 = np.minimum.accumulate(traj.q1)
    hi2 = np.maximum.accumulate(traj.q2)
    lo2 = np.minimum.accumulate(traj.q2)
    widths = []
    heights = []
    for cp in checkpoints:
        i = np.searchsorted(traj.t, cp * (1 + 1e-12), side="right") - 1
        widths.append(float(hi1[i] - lo1[i]))
        heights.append(float(hi2[i] - lo2[i]))
    return BoundingBoxSeries(tuple(float(c) for c in checkpoints), tuple(widths), tuple(heights))


def classify_confinement(
    series: BoundingBoxSeries,
    tail_growth_threshold: float = TAIL_GROWTH_THRESHOLD,
    support_scale: float = SUPPORT_SCALE,
    support_fraction: float = SUPPORT_FRACTION,
) -> ConfinementVerdict:
    """Confined when the box saturates well inside the support.

    A trajectory is Confined when the relative growth of width+height over
    the final two checkpoints stays under the tail threshold and the
    penultimate extent is below ``support_fraction`` of the reference
    support scale; it is Unconfined when the tail keeps growing or the box
    already spans the support.
    """
    if len(series.checkpoints) < 4:
        raise ValueError("need at least 4 checkpoints to judge confinement")
    extents = series.extents
    prev, last = extents[-2], extents[-1]
    growth_tail = 0.0 if prev == 0.0 else (last - prev) / prev

    saturation: float | None = None
    for i in range(1, len(extents)):
        tail = extents[i - 1 :]
        grows = any(
            a > 0 and (b - a) / a >= tail_growth_threshold for a, b in zip(tail, tail[1:])
        )
        if not grows:
            saturation = series.checkpoints[i - 1]
            break

    thresholds = {
        "tail_growth_threshold": tail_growth_threshold,
        "support_scale": support_scale,
        "support_fraction": support_fraction,
    }
    if growth_tail < tail_growth_threshold and prev < support_fraction * support_scale:
        label = CONFINED
    elif growth_tail >= tail_growth_threshold or prev >= support_fraction * support_scale:
        label = UNCONFINED
    else:
        label = INDETERMINATE
    return ConfinementVerdict(label, growth_tail, saturation, thresholds)


def occupancy_grid(traj: Trajectory, bounds: float = 4.0, resolution: int = 60) -> OccupancyGrid:
    """Count trajectory samples per cell; row index follows q2, column q1."""
    L = float(bounds)
    edges = np.linspace(-L, L, resolution + 1)
    counts, _, _ = np.histogram2d(traj.q2, traj.q1, bins=(edges, edges))
    inside = int(counts.sum())
    return OccupancyGrid(
        bounds=L,
        resolution=resolution,
        counts=counts.astype(np.int64),
        outside=len(traj) - inside,
    )


def merge_grids(grids: Sequence[OccupancyGrid]) -> OccupancyGrid:
    base = grids[0]
    counts = sum((g.counts for g in grids[1:]), base.counts.copy())
    return OccupancyGrid(base.bounds, base.resolution, counts, sum(g.outside for g in grids))


def jaccard_overlap(a: OccupancyGrid, b: OccupancyGrid) -> float:
    """Jaccard index of the visited-cell sets of two grids."""
    if a.bounds != b.bounds or a.resolution != b.resolution:
        raise ValueError("grids have different geometry")
    va, vb = a.visited, b.visited
    union = int(np.logical_or(va, vb).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(va, vb).sum()) / union


def born_significant_cells(
    spec: WaveFunctionSpec,
    bounds: float = 4.0,
    resolution: int = 60,
    mass_fraction: float = 0.99,
    time_samples: int = 100,
) -> np.ndarray:
    """Boolean mask of the cells holding the top ``mass_fraction`` of
    one-period time-averaged Born mass."""
    L = float(bounds)
    centers = -L + (np.arange(resolution) + 0.5) * (2.0 * L / resolution)
    density = time_averaged_density_grid(spec, centers, centers, samples=time_samples)
    flat = density.ravel()
    order = np.argsort(flat)[::-1]
    cum = np.cumsum(flat[order])
    need = mass_fraction * flat.sum()
    k = int(np.searchsorted(cum, need)) + 1
    mask = np.zeros(flat.shape, dtype=bool)
    mask[order[:k]] = True
    return mask.reshape(density.shape)


def coverage_fraction(
    grid: OccupancyGrid,
    spec: WaveFunctionSpec,
    mass_fraction: float = 0.99,
    time_samples: int = 100,
) -> float:
    """Fraction of Born-significant cells the trajectory visited."""
    significant = born_significant_cells(
        spec, grid.bounds, grid.resolution, mass_fraction, time_samples
    )
    total = int(significant.sum())
    if total == 0:
        return 0.0
    return int(np.logical_and(grid.visited, significant).sum()) / total


def annulus_profile(grid: OccupancyGrid) -> tuple[float, float]:
    """(inner, outer) radius of the visited cells, by cell center."""
    centers = grid.cell_centers()
    cx, cy = np.meshgrid(centers, centers)
    r = np.hypot(cx, cy)[grid.visited]
    if len(r) == 0:
        return (0.0, 0.0)
    return float(r.min()), float(r.max())


def cohort_analysis(
    trajs: Sequence[Trajectory],
    center: tuple[float, float] | None = None,
    edge: float | None = None,
    bounds: float = 4.0,
    resolution: int = 60,
) -> CohortReport:
    """Pairwise distances at every sample time plus occupancy overlap.

    All trajectories must share the wave function and the sampling grid.
    """
    if len(trajs) < 2:
        raise ValueError("cohort needs at least two trajectories")
    fp = trajs[0].spec_fingerprint
    n_samples = len(trajs[0])
    for traj in trajs[1:]:
        if traj.spec_fingerprint != fp:
            raise ValueError("cohort trajectories use different wave functions")
        if len(traj) != n_samples:
            raise ValueError("cohort trajectories have different horizons")

    starts = np.array([traj.start for traj in trajs])
    if center is None:
        center = (float(starts[:, 0].mean()), float(starts[:, 1].mean()))
    if edge is None:
        edge = float(
            max(starts[:, 0].max() - starts[:, 0].min(), starts[:, 1].max() - starts[:, 1].min())
        )

    q1 = np.stack([traj.q1 for traj in trajs])
    q2 = np.stack([traj.q2 for traj in trajs])
    n = len(trajs)
    best = -1.0
    best_pair = (0, 1)
    best_time = 0.0
    final = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = np.hypot(q1[i] - q1[j], q2[i] - q2[j])
            k = int(np.argmax(d))
            if d[k] > best:
                best = float(d[k])
                best_pair = (i, j)
                best_time = float(trajs[i].t[k])
            final[i, j] = final[j, i] = d[-1]

    grids = [occupancy_grid(traj, bounds, resolution) for traj in trajs]
    overlaps = [
        jaccard_overlap(grids[i], grids[j]) for i in range(n) for j in range(i + 1, n)
    ]
    return CohortReport(
        center=center,
        edge=edge,
        n_trajectories=n,
        max_pairwise_distance=best,
        max_distance_time=best_time,
        max_distance_pair=best_pair,
        final_distances=final,
        mean_overlap=float(np.mean(overlaps)),
    )


def angular_drift_rate(traj: Trajectory) -> float:
    """Mean angular drift in radians per period.

    Unwraps the polar angle along the samples and fits a straight line; the
    slope times T is the drift per period.
    """
    r = np.hypot(traj.q1, traj.q2)
    if r.min() < 1e-6:
        raise OriginCrossingError(
            f"sample at t = {traj.t[int(np.argmin(r))]:.6f} sits on the origin"
        )
    angle = np.unwrap(np.arctan2(traj.q2, traj.q1))
    slope = np.polyfit(traj.t, angle, 1)[0]
    return float(slope * TWO_PI)
