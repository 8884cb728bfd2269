"""Desk-scale relaxation experiments on particle ensembles.

A nonequilibrium distribution is represented by a cloud of configurations
transported along the guidance flow; the continuity equation is then
satisfied by construction.  Approach to equilibrium is measured by the
coarse-grained H-function

    Hbar = sum_cells rho_bar ln(rho_bar / born_bar) * cell_area,

the relative entropy between the cell-averaged ensemble density and the
cell-averaged Born density on a common grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .integrator import IntegratorConfig, advance_points
from .wavefunction import (
    NODE_GUARD,
    TWO_PI,
    WaveFunctionSpec,
    born_density_grid,
    marginal_density,
)

SAMPLING_BOX = 6.0  # Born rejection sampling window; tail mass outside is < 1e-14


@dataclass(frozen=True)
class HGrid:
    """Common coarse-graining grid for rho_bar and the Born average."""

    bounds: float = 4.0
    resolution: int = 30

    @property
    def cell_area(self) -> float:
        return (2.0 * self.bounds / self.resolution) ** 2

    def edges(self) -> np.ndarray:
        return np.linspace(-self.bounds, self.bounds, self.resolution + 1)

    def centers(self) -> np.ndarray:
        L, r = self.bounds, self.resolution
        return -L + (np.arange(r) + 0.5) * (2.0 * L / r)


@dataclass
class EnsembleState:
    """Particle positions at a common time, with provenance."""

    spec_fingerprint: str
    t: float
    q1: np.ndarray
    q2: np.ndarray
    seed: int
    initial_density_tag: str
    n_failed: int = 0

    def __len__(self) -> int:
        return len(self.q1)


@dataclass(frozen=True)
class HRecord:
    t: float
    resolution: int
    hbar: float
    cells_used: int
    clamped_cells: int = 0


def sample_initial(
    spec: WaveFunctionSpec,
    kind: str,
    n: int,
    seed: int,
    radius: float = 1.0,
    center: tuple[float, float] = (0.0, 0.0),
    sigma: float = 0.1,
) -> EnsembleState:
    """Draw a named initial distribution, deterministically per seed.

    Kinds: ``ground-born`` (Born density of the bare ground state),
    ``disk`` (uniform on a disk of the given radius around ``center``),
    ``gaussian`` (isotropic spot of width ``sigma`` at ``center``) and
    ``born`` (Born density of ``spec`` at t = 0, by rejection sampling).
    """
    if n < 1:
        raise ValueError("ensemble size must be at least 1")
    rng = np.random.default_rng(seed)
    if kind == "ground-born":
        # |phi_0|^2 per axis is a normal with variance 1/2
        q1 = rng.normal(0.0, math.sqrt(0.5), n)
        q2 = rng.normal(0.0, math.sqrt(0.5), n)
        tag = "ground-born"
    elif kind == "disk":
        r = radius * np.sqrt(rng.uniform(0.0, 1.0, n))
        phi = rng.uniform(0.0, TWO_PI, n)
        q1 = center[0] + r * np.cos(phi)
        q2 = center[1] + r * np.sin(phi)
        tag = f"disk(R={radius:g},center={center[0]:g},{center[1]:g})"
    elif kind == "gaussian":
        q1 = rng.normal(center[0], sigma, n)
        q2 = rng.normal(center[1], sigma, n)
        tag = f"gaussian(sigma={sigma:g},center={center[0]:g},{center[1]:g})"
    elif kind == "born":
        q1, q2 = _sample_born(spec, n, rng)
        tag = "born"
    else:
        raise ValueError(f"unknown initial distribution kind {kind!r}")
    return EnsembleState(
        spec_fingerprint=spec.fingerprint(),
        t=0.0,
        q1=q1,
        q2=q2,
        seed=seed,
        initial_density_tag=tag,
    )


def _sample_born(spec: WaveFunctionSpec, n: int, rng: np.random.Generator):
    """Rejection sampling of |psi(., 0)|^2 from a uniform box proposal."""
    L = SAMPLING_BOX
    fine = np.linspace(-L, L, 481)
    envelope = 1.1 * born_density_grid(spec, fine, fine, 0.0).max()
    out1 = np.empty(n)
    out2 = np.empty(n)
    have = 0
    while have < n:
        m = max(4096, min(2_000_000, int(2.2 * (n - have) * envelope * (2 * L) ** 2)))
        x = rng.uniform(-L, L, m)
        y = rng.uniform(-L, L, m)
        u = rng.uniform(0.0, envelope, m)
        dens = _density_at_points(spec, x, y, 0.0)
        if (dens > envelope).any():
            raise RuntimeError("rejection envelope violated; refine the proposal grid")
        keep = u < dens
        take = min(int(keep.sum()), n - have)
        out1[have : have + take] = x[keep][:take]
        out2[have : have + take] = y[keep][:take]
        have += take
    return out1, out2


def _density_at_points(spec: WaveFunctionSpec, q1, q2, t):
    from .wavefunction import flow_batch

    _, _, rho = flow_batch(spec, q1, q2, t)
    return rho


def evolve_ensemble(
    spec: WaveFunctionSpec,
    state: EnsembleState,
    horizon: float,
    config: IntegratorConfig = IntegratorConfig(),
) -> EnsembleState:
    """Transport every particle along the flow for ``horizon`` time units.

    Particles are advanced independently with per-lane adaptive steps;
    lanes that hit the node guard or underflow are dropped from the cloud
    and tallied in ``n_failed`` instead of aborting the run.
    """
    if state.spec_fingerprint != spec.fingerprint():
        raise ValueError("ensemble was sampled for a different wave function")
    result = advance_points(spec, state.q1, state.q2, state.t, state.t + horizon, config)
    ok = result.ok
    return EnsembleState(
        spec_fingerprint=state.spec_fingerprint,
        t=state.t + horizon,
        q1=result.q1[ok],
        q2=result.q2[ok],
        seed=state.seed,
        initial_density_tag=state.initial_density_tag,
        n_failed=state.n_failed + result.n_failed,
    )


def relative_entropy(
    rho_bar: np.ndarray,
    born_bar: np.ndarray,
    cell_area: float,
    node_guard: float = NODE_GUARD,
) -> tuple[float, int, int]:
    """sum rho_bar ln(rho_bar/born_bar) * area over occupied cells.

    Cells where the Born average underflows the node guard are clamped to
    the guard; returns (hbar, occupied cells, clamped cells).
    """
    occupied = rho_bar > 0.0
    born = np.maximum(born_bar[occupied], node_guard)
    clamped = int((born_bar[occupied] < node_guard).sum())
    rho = rho_bar[occupied]
    hbar = float(np.sum(rho * np.log(rho / born)) * cell_area)
    return hbar, int(occupied.sum()), clamped


def coarse_grained_H(
    state: EnsembleState,
    spec: WaveFunctionSpec,
    grid: HGrid = HGrid(),
) -> HRecord:
    """Coarse-grained H at the ensemble's time.

    rho_bar comes from the particle histogram, the Born average from
    midpoint quadrature of |psi|^2 at the cell centers; particles outside
    the grid are excluded from the normalization.
    """
    if len(state) == 0:
        raise ValueError("empty ensemble")
    edges = grid.edges()
    counts, _, _ = np.histogram2d(state.q2, state.q1, bins=(edges, edges))
    inside = counts.sum()
    if inside == 0:
        raise ValueError("no particles inside the coarse-graining grid")
    rho_bar = counts / (inside * grid.cell_area)
    centers = grid.centers()
    born_bar = born_density_grid(spec, centers, centers, state.t)
    hbar, used, clamped = relative_entropy(rho_bar, born_bar, grid.cell_area)
    return HRecord(
        t=state.t,
        resolution=grid.resolution,
        hbar=hbar,
        cells_used=used,
        clamped_cells=clamped,
    )


def ks_distance(samples: np.ndarray, spec: WaveFunctionSpec, t: float, axis: int) -> float:
    """One-sample Kolmogorov-Smirnov distance against the exact marginal CDF."""
    L = SAMPLING_BOX + 2.0
    x = np.linspace(-L, L, 8001)
    pdf = marginal_density(spec, x, t, axis=axis)
    cdf = np.concatenate(([0.0], np.cumsum((pdf[1:] + pdf[:-1]) * 0.5 * np.diff(x))))
    cdf /= cdf[-1]
    data = np.sort(samples)
    n = len(data)
    theo = np.interp(data, x, cdf)
    upper = np.abs(np.arange(1, n + 1) / n - theo).max()
    lower = np.abs(theo - np.arange(0, n) / n).max()
    return float(max(upper, lower))


def ks_threshold(n: int, significance: float = 0.01) -> float:
    """Asymptotic one-sample KS acceptance bound at the given significance."""
    return math.sqrt(-0.5 * math.log(significance / 2.0)) / math.sqrt(n)


# -- file formats ------------------------------------------------------------


def write_snapshot_csv(path: str | Path, state: EnsembleState, spec: WaveFunctionSpec) -> None:
    """`q1,q2` rows with spec, seed and time in the comment header."""
    lines = ["# pilotwave ensemble snapshot"]
    lines += [f"# {line}" for line in spec.to_text().splitlines()]
    lines.append(f"# spec_digest = {state.spec_fingerprint}")
    lines.append(f"# seed = {state.seed}")
    lines.append(f"# t = {state.t:.12g}")
    lines.append(f"# initial_density = {state.initial_density_tag}")
    lines.append(f"# n_failed = {state.n_failed}")
    lines.append("q1,q2")
    for a, b in zip(state.q1, state.q2):
        lines.append(f"{a:.12g},{b:.12g}")
    Path(path).write_text("\n".join(lines) + "\n")


def write_h_series_csv(path: str | Path, records: list[HRecord]) -> None:
    lines = ["t,hbar,cells"]
    for rec in records:
        lines.append(f"{rec.t:.12g},{rec.hbar:.12g},{rec.cells_used}")
    Path(path).write_text("\n".join(lines) + "\n")
