"""Scenario catalog and reproduction runs.

Encodes the published experiment designs: the ten canonical starting
points, the printed phase sets, the epsilon sweep, the five-mode
perturbations, the inhomogeneous variants and the neighbor-cohort squares.
``run_scenario`` integrates every trajectory of a scenario, applies the
confinement diagnostics, renders figures and writes a machine-readable
summary that is compared against the expected outcomes where the source
states them.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .diagnostics import (
    CHECKPOINT_PERIODS,
    OriginCrossingError,
    angular_drift_rate,
    annulus_profile,
    bounding_box_series,
    classify_confinement,
    cohort_analysis,
    coverage_fraction,
    occupancy_grid,
)
from .ensemble import HGrid, coarse_grained_H, evolve_ensemble, sample_initial, write_h_series_csv, write_snapshot_csv
from .integrator import IntegratorConfig, Trajectory, integrate_trajectory, write_trajectory_csv
from .svgplot import PlotSpec, grid_svg, trajectory_svg, write_svg
from .wavefunction import FIVE_MODES, FOUR_MODES, TWO_PI, Mode, WaveFunctionSpec, born_density_grid

CONFINED_LABEL = "confined"
UNCONFINED_LABEL = "unconfined"
ANNULAR_LABEL = "annular"

COHORT_EDGE = 0.04


def canonical_points() -> tuple[tuple[float, float], ...]:
    """The ten standard starting points, in their published order."""
    return (
        (1.5, 1.5),
        (1.5, -1.5),
        (-1.5, 1.5),
        (-1.5, -1.5),
        (0.5, 0.0),
        (0.0, -0.5),
        (-0.5, 0.0),
        (0.0, 0.5),
        (0.25, 0.25),
        (0.25, -0.25),
    )


def square_cohort(
    center: tuple[float, float], edge: float = COHORT_EDGE
) -> tuple[tuple[float, float], ...]:
    """13 points of a cohort square: 8 boundary, 4 interior, 1 center."""
    if edge <= 0:
        raise ValueError("edge must be positive")
    cx, cy = center
    h = edge / 2.0
    q = edge / 4.0
    offsets = (
        (-h, h),
        (-h, 0.0),
        (-h, -h),
        (0.0, -h),
        (h, -h),
        (h, 0.0),
        (h, h),
        (0.0, h),
        (-q, q),
        (-q, -q),
        (q, -q),
        (q, q),
        (0.0, 0.0),
    )
    return tuple((cx + dx, cy + dy) for dx, dy in offsets)


def published_phase_sets() -> dict[str, dict[Mode, float]]:
    """The five printed phase assignments, keyed fn3/fn4/fn5/fn7/fn8."""
    return {
        "fn3": {
            Mode(0, 0): 0.5442,
            Mode(0, 1): 2.3099,
            Mode(1, 0): 5.6703,
            Mode(1, 1): 4.5333,
        },
        "fn4": {
            Mode(0, 0): 4.8157,
            Mode(0, 1): 1.486,
            Mode(1, 0): 2.6226,
            Mode(1, 1): 3.8416,
        },
        "fn5": {
            Mode(0, 0): 4.2065,
            Mode(0, 1): 0.1803,
            Mode(0, 2): 2.0226,
            Mode(1, 0): 5.5521,
            Mode(1, 1): 3.3361,
            Mode(2, 0): 2.6561,
        },
        "fn7": {
            Mode(0, 0): 1.2434,
            Mode(0, 1): 4.411,
            Mode(0, 2): 4.3749,
            Mode(1, 0): 4.2427,
            Mode(1, 1): 1.5574,
            Mode(2, 0): 5.7796,
        },
        "fn8": {
            Mode(0, 0): 4.0857,
            Mode(0, 1): 0.2194,
            Mode(0, 2): 4.6059,
            Mode(1, 0): 1.2201,
            Mode(1, 1): 0.439,
            Mode(2, 0): 4.0563,
        },
    }


def random_phase_set(modes: Sequence[Mode], seed: int) -> dict[Mode, float]:
    """Uniform phases on [0, 2*pi), deterministic per seed."""
    rng = np.random.default_rng(seed)
    return {Mode(*mode): float(v) for mode, v in zip(modes, rng.uniform(0.0, TWO_PI, len(modes)))}


@dataclass(frozen=True)
class Scenario:
    """One reproduction experiment: wave function, starts, horizon, expectations."""

    name: str
    spec: WaveFunctionSpec
    starts: tuple[tuple[float, float], ...]
    horizon_periods: int
    cohort_edge: float | None = None
    seeds: tuple[int, ...] = ()
    expected: Mapping[int, str] = field(default_factory=dict)  # 1-based start index
    expected_cohort: Mapping[str, float] | None = None
    annulus_inner: float = 1.0
    annulus_width_bound: float | None = None
    description: str = ""

    def __post_init__(self) -> None:
        if self.horizon_periods < 1:
            raise ValueError("horizon must be a positive number of periods")
        for index in self.expected:
            if not 1 <= index <= len(self.starts):
                raise ValueError(f"expected label for missing start point {index}")

    @property
    def horizon(self) -> float:
        return self.horizon_periods * TWO_PI


def _desk_variants(scenario: Scenario) -> list[Scenario]:
    out = []
    for periods in (100, 500):
        if periods < scenario.horizon_periods:
            out.append(
                replace(
                    scenario,
                    name=f"{scenario.name}-{periods}t",
                    horizon_periods=periods,
                    description=f"{scenario.description} (desk-scale {periods}T variant)",
                )
            )
    return out


def scenario_catalog() -> list[Scenario]:
    """Full-horizon scenarios plus auto-generated 100T/500T desk variants."""
    phases = published_phase_sets()
    points = canonical_points()
    base: list[Scenario] = []

    base.append(
        Scenario(
            name="fn3-eps1",
            spec=WaveFunctionSpec.homogeneous(1.0, phases["fn3"], modes=FOUR_MODES),
            starts=points,
            horizon_periods=3000,
            expected={
                1: UNCONFINED_LABEL,
                2: UNCONFINED_LABEL,
                3: UNCONFINED_LABEL,
                4: UNCONFINED_LABEL,
                6: UNCONFINED_LABEL,
                5: CONFINED_LABEL,
                7: CONFINED_LABEL,
                8: CONFINED_LABEL,
                9: CONFINED_LABEL,
                10: CONFINED_LABEL,
            },
            description="four equal modes, printed phase set 3: 5/5 confinement split",
        )
    )

    sweep_expectations = {
        0.5: {**{i: UNCONFINED_LABEL for i in range(1, 5)}, **{i: CONFINED_LABEL for i in range(5, 11)}},
        0.25: {**{i: ANNULAR_LABEL for i in range(1, 5)}, **{i: CONFINED_LABEL for i in range(5, 11)}},
        0.1: {**{i: ANNULAR_LABEL for i in range(1, 5)}, **{i: CONFINED_LABEL for i in range(5, 11)}},
        0.05: {3: CONFINED_LABEL, 7: CONFINED_LABEL},
    }
    annulus_bounds = {0.5: None, 0.25: None, 0.1: 1.5, 0.05: None}
    for eps in (0.5, 0.25, 0.1, 0.05):
        base.append(
            Scenario(
                name=f"fn4-eps{eps:g}",
                spec=WaveFunctionSpec.homogeneous(eps, phases["fn4"], modes=FOUR_MODES),
                starts=points,
                horizon_periods=3000,
                expected=sweep_expectations[eps],
                annulus_width_bound=annulus_bounds[eps],
                description=f"epsilon sweep member epsilon={eps:g}, printed phase set 4",
            )
        )

    base.append(
        Scenario(
            name="fn4-inhom",
            spec=WaveFunctionSpec.from_amplitudes(
                {Mode(0, 1): 0.2, Mode(1, 0): 0.15, Mode(1, 1): 0.1}, phases["fn4"]
            ),
            starts=points,
            horizon_periods=3000,
            expected={3: ANNULAR_LABEL, 7: CONFINED_LABEL},
            description="inhomogeneous amplitudes 0.2/0.15/0.1 with phase set 4",
        )
    )

    base.append(
        Scenario(
            name="fn5-eps0.1",
            spec=WaveFunctionSpec.homogeneous(0.1, phases["fn5"], modes=FIVE_MODES),
            starts=points,
            horizon_periods=3000,
            expected={1: ANNULAR_LABEL, 7: CONFINED_LABEL},
            description="five perturbing modes at epsilon=0.1, printed phase set 5",
        )
    )

    base.append(
        Scenario(
            name="fn7-cohorts",
            spec=WaveFunctionSpec.homogeneous(0.1, phases["fn7"], modes=FIVE_MODES),
            starts=points,
            horizon_periods=3000,
            cohort_edge=COHORT_EDGE,
            expected_cohort={"square": 1, "max_pairwise": 1.47, "final_pair": 0.08},
            description="neighbor cohorts, five modes epsilon=0.1, printed phase set 7",
        )
    )

    base.append(
        Scenario(
            name="fn8-inhom-cohorts",
            spec=WaveFunctionSpec.from_amplitudes(
                {
                    Mode(0, 1): 0.11,
                    Mode(0, 2): 0.12,
                    Mode(1, 0): 0.13,
                    Mode(1, 1): 0.14,
                    Mode(2, 0): 0.15,
                },
                phases["fn8"],
            ),
            starts=points,
            horizon_periods=3000,
            cohort_edge=COHORT_EDGE,
            description="neighbor cohorts with inhomogeneous amplitudes, printed phase set 8",
        )
    )

    catalog = []
    for scenario in base:
        catalog.append(scenario)
        catalog.extend(_desk_variants(scenario))
    return catalog


def get_scenario(name: str) -> Scenario:
    for scenario in scenario_catalog():
        if scenario.name == name:
            return scenario
    raise KeyError(f"unknown scenario {name!r}")


def checkpoint_periods_for(horizon_periods: int) -> tuple[int, ...]:
    """Checkpoint horizons: the standard series, densified for short runs."""
    cps = {p for p in CHECKPOINT_PERIODS if p <= horizon_periods}
    cps.add(horizon_periods)
    if len(cps) < 4:
        for k in (1, 2, 3):
            cps.add(max(1, (horizon_periods * k) // 4))
    return tuple(sorted(cps))


# -- scenario serialization --------------------------------------------------


def scenario_to_json(scenario: Scenario) -> str:
    payload = {
        "name": scenario.name,
        "modes": [[mode.m, mode.n] for mode, _, _ in scenario.spec.terms],
        "epsilons": [amp for _, amp, _ in scenario.spec.terms],
        "thetas": [theta for _, _, theta in scenario.spec.terms],
        "starts": [list(s) for s in scenario.starts],
        "horizon_periods": scenario.horizon_periods,
        "cohort_edge": scenario.cohort_edge,
        "seeds": list(scenario.seeds),
        "expected": {str(k): v for k, v in scenario.expected.items()},
        "expected_cohort": dict(scenario.expected_cohort) if scenario.expected_cohort else None,
        "annulus_inner": scenario.annulus_inner,
        "annulus_width_bound": scenario.annulus_width_bound,
        "description": scenario.description,
    }
    return json.dumps(payload, indent=2, sort_keys=True) + "\n"


def scenario_from_json(text: str) -> Scenario:
    payload = json.loads(text)
    terms = tuple(
        (Mode(*mode), eps, theta)
        for mode, eps, theta in zip(payload["modes"], payload["epsilons"], payload["thetas"])
    )
    return Scenario(
        name=payload["name"],
        spec=WaveFunctionSpec(terms),
        starts=tuple(tuple(s) for s in payload["starts"]),
        horizon_periods=int(payload["horizon_periods"]),
        cohort_edge=payload.get("cohort_edge"),
        seeds=tuple(payload.get("seeds", ())),
        expected={int(k): v for k, v in payload.get("expected", {}).items()},
        expected_cohort=payload.get("expected_cohort"),
        annulus_inner=payload.get("annulus_inner", 1.0),
        annulus_width_bound=payload.get("annulus_width_bound"),
        description=payload.get("description", ""),
    )


# -- scenario runner ---------------------------------------------------------


@dataclass
class ScenarioResult:
    scenario: Scenario
    summary: dict
    mismatches: int
    failures: int
    outdir: Path | None


def _integrate_task(args) -> Trajectory:
    spec_text, start, horizon, config = args
    spec = WaveFunctionSpec.from_text(spec_text)
    return integrate_trajectory(spec, start, horizon, config)


def _run_batch(
    spec: WaveFunctionSpec,
    starts: Sequence[tuple[float, float]],
    horizon: float,
    config: IntegratorConfig,
    workers: int,
) -> list[Trajectory]:
    if workers <= 1 or len(starts) <= 1:
        return [integrate_trajectory(spec, start, horizon, config) for start in starts]
    tasks = [(spec.to_text(), start, horizon, config) for start in starts]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_integrate_task, tasks))


def _start_metrics(
    traj: Trajectory,
    spec: WaveFunctionSpec,
    checkpoints: Sequence[float],
    scenario: Scenario,
) -> dict:
    record: dict = {
        "start": [traj.start[0], traj.start[1]],
        "final": [traj.final[0], traj.final[1]],
        "steps_taken": traj.steps_taken,
        "steps_rejected": traj.steps_rejected,
        "min_density_seen": traj.min_density_seen,
        "error": traj.error,
    }
    if traj.error is not None:
        return record
    series = bounding_box_series(traj, checkpoints)
    record["checkpoints_periods"] = [cp / TWO_PI for cp in series.checkpoints]
    record["widths"] = list(series.widths)
    record["heights"] = list(series.heights)
    verdict = classify_confinement(series)
    record["verdict"] = verdict.label
    record["growth_tail"] = verdict.growth_tail
    record["saturation_checkpoint_periods"] = (
        None if verdict.saturation_checkpoint is None else verdict.saturation_checkpoint / TWO_PI
    )
    grid = occupancy_grid(traj)
    record["coverage_fraction"] = coverage_fraction(grid, spec)
    inner, outer = annulus_profile(grid)
    record["annulus_inner"] = inner
    record["annulus_outer"] = outer
    radius = np.hypot(traj.q1, traj.q2)
    record["central_disk_empty"] = bool(radius.min() >= scenario.annulus_inner)
    try:
        record["drift_rate_per_period"] = angular_drift_rate(traj)
    except OriginCrossingError:
        record["drift_rate_per_period"] = None
    return record


def _expectation_met(record: dict, label: str, scenario: Scenario) -> bool:
    if record.get("error") is not None:
        return False
    if label == CONFINED_LABEL:
        return record["verdict"] == "Confined"
    if label == UNCONFINED_LABEL:
        return record["verdict"] == "Unconfined"
    if label == ANNULAR_LABEL:
        if not record["central_disk_empty"]:
            return False
        if scenario.annulus_width_bound is not None:
            width = record["annulus_outer"] - record["annulus_inner"]
            return width < scenario.annulus_width_bound
        return True
    raise ValueError(f"unknown expectation label {label!r}")


def run_scenario(
    scenario: Scenario,
    config: IntegratorConfig = IntegratorConfig(),
    outdir: str | Path | None = None,
    *,
    workers: int = 1,
    points: Sequence[int] | None = None,
    horizon_periods: int | None = None,
    write_svgs: bool = True,
    write_cohort_members: bool = False,
    plot: PlotSpec = PlotSpec(),
) -> ScenarioResult:
    """Integrate a scenario's trajectories, diagnose them and write reports.

    ``points`` selects a subset of 1-based start indices; ``horizon_periods``
    overrides the catalog horizon (desk-scale truncation).  Cohort scenarios
    integrate 13 trajectories per selected square; member CSV/SVG output is
    skipped by default to keep long-horizon runs at a sane disk footprint.
    """
    if horizon_periods is not None:
        scenario = replace(scenario, name=scenario.name, horizon_periods=horizon_periods)
    horizon = scenario.horizon
    cps = [p * TWO_PI for p in checkpoint_periods_for(scenario.horizon_periods)]
    indices = list(range(1, len(scenario.starts) + 1)) if points is None else sorted(set(points))
    for index in indices:
        if not 1 <= index <= len(scenario.starts):
            raise ValueError(f"start index {index} out of range")

    out = Path(outdir) / scenario.name if outdir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)

    summary: dict = {
        "scenario": scenario.name,
        "description": scenario.description,
        "version": __version__,
        "spec": scenario.spec.to_text().splitlines(),
        "spec_digest": scenario.spec.fingerprint(),
        "config": config.describe(),
        "horizon_periods": scenario.horizon_periods,
        "checkpoints_periods": [cp / TWO_PI for cp in cps],
        "annulus_inner": scenario.annulus_inner,
        "annulus_width_bound": scenario.annulus_width_bound,
        "starts": {},
        "cohorts": {},
    }
    mismatches = 0
    failures = 0

    if scenario.cohort_edge is None:
        starts = [scenario.starts[i - 1] for i in indices]
        trajs = _run_batch(scenario.spec, starts, horizon, config, workers)
        for index, traj in zip(indices, trajs):
            record = _start_metrics(traj, scenario.spec, cps, scenario)
            if traj.error is not None:
                failures += 1
            expected = scenario.expected.get(index)
            if expected is not None:
                record["expected"] = expected
                record["expectation_met"] = _expectation_met(record, expected, scenario)
                if not record["expectation_met"]:
                    mismatches += 1
            summary["starts"][str(index)] = record
            if out is not None:
                write_trajectory_csv(out / f"point{index:02d}.csv", traj, scenario.spec, config)
                if write_svgs:
                    write_svg(
                        out / f"point{index:02d}.svg",
                        trajectory_svg(
                            traj,
                            scenario.spec,
                            plot,
                            verdict=record.get("verdict"),
                            title=f"{scenario.name} point {index}",
                        ),
                    )
    else:
        for index in indices:
            center = scenario.starts[index - 1]
            members = square_cohort(center, scenario.cohort_edge)
            trajs = _run_batch(scenario.spec, members, horizon, config, workers)
            bad = [t for t in trajs if t.error is not None]
            failures += len(bad)
            record: dict = {
                "center": list(center),
                "edge": scenario.cohort_edge,
                "n_members": len(members),
                "n_failed": len(bad),
            }
            alive = [t for t in trajs if t.error is None]
            if len(alive) >= 2:
                report = cohort_analysis(alive, center=center, edge=scenario.cohort_edge)
                record["max_pairwise_distance"] = report.max_pairwise_distance
                record["max_distance_time_periods"] = report.max_distance_time / TWO_PI
                record["min_final_distance"] = report.min_final_distance
                record["max_final_distance"] = report.max_final_distance
                record["mean_overlap"] = report.mean_overlap
            expected = scenario.expected_cohort
            if expected is not None and expected.get("square") == index:
                ok = (
                    "max_pairwise_distance" in record
                    and abs(record["max_pairwise_distance"] - expected["max_pairwise"])
                    <= 0.1 * expected["max_pairwise"]
                    and record["min_final_distance"] <= 2.0 * expected["final_pair"]
                )
                record["expectation_met"] = ok
                if not ok:
                    mismatches += 1
            summary["cohorts"][str(index)] = record
            if out is not None:
                center_traj = trajs[-1]  # footnote-6 order puts the center last
                write_trajectory_csv(
                    out / f"square{index:02d}_center.csv", center_traj, scenario.spec, config
                )
                if write_cohort_members:
                    for j, traj in enumerate(trajs):
                        write_trajectory_csv(
                            out / f"square{index:02d}_member{j:02d}.csv",
                            traj,
                            scenario.spec,
                            config,
                        )
                if write_svgs:
                    write_svg(
                        out / f"square{index:02d}_center.svg",
                        trajectory_svg(
                            center_traj,
                            scenario.spec,
                            plot,
                            title=f"{scenario.name} square {index} center",
                        ),
                    )

    summary["mismatches"] = mismatches
    summary["failures"] = failures
    if out is not None:
        (out / "summary.json").write_text(
            json.dumps(summary, indent=2, sort_keys=True) + "\n"
        )
    return ScenarioResult(scenario, summary, mismatches, failures, out)


# -- fixed-seed desk suite (reproducibility check) ---------------------------


def run_desk_suite(outdir: str | Path, workers: int = 1) -> list[Path]:
    """A fixed, minutes-scale suite exercising every output format.

    Two runs with the same arguments must produce byte-identical files.
    """
    out = Path(outdir)
    out.mkdir(parents=True, exist_ok=True)
    config = IntegratorConfig()
    produced: list[Path] = []

    for name, kwargs in (
        ("fn3-eps1-100t", {}),
        ("fn4-eps0.1-100t", {}),
        ("fn7-cohorts", {"points": [1], "horizon_periods": 25}),
    ):
        result = run_scenario(get_scenario(name), config, out, workers=workers, **kwargs)
        produced += sorted(result.outdir.iterdir())

    spec = get_scenario("fn3-eps1").spec
    ensemble_dir = out / "ensemble-fn3-disk"
    ensemble_dir.mkdir(exist_ok=True)
    state = sample_initial(spec, "disk", 5000, seed=20250809)
    grid = HGrid()
    records = [coarse_grained_H(state, spec)]
    econfig = IntegratorConfig(abstol=1e-6)
    for _ in range(2):
        state = evolve_ensemble(spec, state, TWO_PI, econfig)
        records.append(coarse_grained_H(state, spec))
    write_h_series_csv(ensemble_dir / "h_series.csv", records)
    write_snapshot_csv(ensemble_dir / "final_snapshot.csv", state, spec)
    centers = grid.centers()
    counts, _, _ = np.histogram2d(state.q2, state.q1, bins=(grid.edges(), grid.edges()))
    write_svg(
        ensemble_dir / "final_density.svg",
        grid_svg(
            counts,
            grid.bounds,
            note_lines=[
                "ensemble density after 2 T (disk R=1, n=5000, seed 20250809)",
                f"digest = {spec.fingerprint()[:16]}",
            ],
        ),
    )
    write_svg(
        ensemble_dir / "born_density.svg",
        grid_svg(
            born_density_grid(spec, centers, centers, state.t),
            grid.bounds,
            note_lines=["equilibrium density at integer periods"],
        ),
    )
    produced += sorted(ensemble_dir.iterdir())
    return produced
