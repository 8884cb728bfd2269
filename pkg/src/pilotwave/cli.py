"""Command-line front end.

Subcommands: ``trajectory`` (one start point, optional figure and
convergence check), ``sweep`` (a full scenario with per-start verdicts)
and ``ensemble`` (relaxation runs with H-function series).  Exit codes:
0 success, 1 usage error, 2 numerical failure, 3 expectation mismatch.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .diagnostics import (
    bounding_box_series,
    classify_confinement,
    coverage_fraction,
    occupancy_grid,
)
from .ensemble import (
    HGrid,
    coarse_grained_H,
    evolve_ensemble,
    sample_initial,
    write_h_series_csv,
    write_snapshot_csv,
)
from .experiments import (
    checkpoint_periods_for,
    get_scenario,
    run_scenario,
    scenario_catalog,
    scenario_from_json,
    published_phase_sets,
)
from .integrator import (
    IntegratorConfig,
    integrate_trajectory,
    verify_convergence,
    write_trajectory_csv,
)
from .svgplot import PlotSpec, grid_svg, trajectory_svg, write_svg
from .wavefunction import (
    FIVE_MODES,
    FOUR_MODES,
    TWO_PI,
    PilotWaveError,
    WaveFunctionSpec,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_MISMATCH = 3

OUTPUT_ENV = "PILOTWAVE_OUTDIR"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse default exits with 2; the contract says 1
        raise _UsageError(message)


def _parse_point(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise _UsageError(f"expected 'x,y', got {text!r}")
    return float(parts[0]), float(parts[1])


def _resolve_spec(args) -> WaveFunctionSpec:
    """Wave function from --scenario, --spec-file, or inline flags."""
    if getattr(args, "scenario", None):
        return _resolve_scenario(args).spec
    if getattr(args, "spec_file", None):
        return WaveFunctionSpec.from_text(Path(args.spec_file).read_text())
    if getattr(args, "epsilon", None) is not None:
        modes = FIVE_MODES if args.modes == "five" else FOUR_MODES
        phases = published_phase_sets()[args.phases]
        if args.epsilon == 0.0:
            return WaveFunctionSpec.ground(theta=phases[modes[0]])
        return WaveFunctionSpec.homogeneous(args.epsilon, phases, modes=modes)
    raise _UsageError("give --scenario NAME, --spec-file PATH, or --epsilon VALUE")


def _resolve_scenario(args):
    if args.scenario and args.scenario.endswith(".json"):
        return scenario_from_json(Path(args.scenario).read_text())
    try:
        return get_scenario(args.scenario)
    except KeyError as exc:
        raise _UsageError(str(exc)) from exc


def _outdir(args) -> Path:
    if args.out:
        path = Path(args.out)
    else:
        path = Path(os.environ.get(OUTPUT_ENV, "pilotwave-out"))
    path.mkdir(parents=True, exist_ok=True)
    return path


def _config(args, default_abstol: float = 1e-8) -> IntegratorConfig:
    return IntegratorConfig(abstol=args.abstol if args.abstol is not None else default_abstol)


def cmd_trajectory(args) -> int:
    spec = _resolve_spec(args)
    config = _config(args)
    out = _outdir(args)
    horizon = args.periods * TWO_PI
    start = _parse_point(args.start)

    traj = integrate_trajectory(spec, start, horizon, config)
    tag = f"trajectory_{start[0]:g}_{start[1]:g}_{args.periods:g}T"
    csv_path = out / f"{tag}.csv"
    write_trajectory_csv(csv_path, traj, spec, config)
    produced = [csv_path]

    verdict = None
    if traj.error is None:
        cps = [p * TWO_PI for p in checkpoint_periods_for(args.periods)]
        series = bounding_box_series(traj, cps)
        verdict = classify_confinement(series).label
        width = series.widths[-1]
        height = series.heights[-1]
        print(f"{tag}: verdict={verdict} width={width:.6g} height={height:.6g}")
        if args.checkpoints:
            print("periods,width,height")
            for cp, w, h in zip(series.checkpoints, series.widths, series.heights):
                print(f"{cp / TWO_PI:g},{w:.6g},{h:.6g}")
    else:
        print(f"{tag}: truncated ({traj.error})", file=sys.stderr)

    if args.svg:
        svg_path = out / f"{tag}.svg"
        write_svg(
            svg_path,
            trajectory_svg(traj, spec, PlotSpec(stride=args.stride), verdict=verdict),
        )
        produced.append(svg_path)

    if args.verify:
        report = verify_convergence(spec, start, horizon, config.abstol, config)
        print(
            f"convergence: abstol {report.abstol_coarse:g} vs {report.abstol_fine:g} "
            f"final separation {report.final_separation:.3e} "
            f"-> {'converged' if report.converged else 'NOT converged'}"
        )
        if not report.converged:
            return EXIT_NUMERICAL

    for path in produced:
        print(f"wrote {path}")
    return EXIT_NUMERICAL if traj.error is not None else EXIT_OK


def cmd_sweep(args) -> int:
    if args.list:
        for scenario in scenario_catalog():
            marker = " [cohorts]" if scenario.cohort_edge else ""
            print(f"{scenario.name:26s} {scenario.horizon_periods:5d}T{marker}  {scenario.description}")
        return EXIT_OK
    if not args.scenario:
        raise _UsageError("--scenario NAME required (or --list)")
    scenario = _resolve_scenario(args)
    config = _config(args)
    out = _outdir(args)
    result = run_scenario(
        scenario,
        config,
        out,
        workers=args.workers,
        points=args.points,
        horizon_periods=args.periods,
        write_svgs=not args.no_svg,
    )
    _print_sweep_table(result.summary)
    print(f"wrote {result.outdir / 'summary.json'}")
    if result.failures:
        return EXIT_NUMERICAL
    if args.expect and result.mismatches:
        return EXIT_MISMATCH
    return EXIT_OK


def _print_sweep_table(summary: dict) -> None:
    starts = summary.get("starts", {})
    if starts:
        print(f"{'pt':>3} {'start':>14} {'verdict':>12} {'coverage':>9} {'drift/T':>10} {'expected':>10} ok")
        for index in sorted(starts, key=int):
            rec = starts[index]
            if rec.get("error"):
                print(f"{index:>3} {str(tuple(rec['start'])):>14} truncated: {rec['error']}")
                continue
            drift = rec.get("drift_rate_per_period")
            drift_text = f"{drift:10.4f}" if drift is not None else "       n/a"
            expected = rec.get("expected", "-")
            ok = {True: "yes", False: "NO"}.get(rec.get("expectation_met"), "-")
            print(
                f"{index:>3} ({rec['start'][0]:5.2f},{rec['start'][1]:5.2f}) "
                f"{rec['verdict']:>12} {rec['coverage_fraction']:9.4f} {drift_text} {expected:>10} {ok}"
            )
    for index, rec in sorted(summary.get("cohorts", {}).items(), key=lambda kv: int(kv[0])):
        if "max_pairwise_distance" in rec:
            print(
                f"square {index}: max pairwise {rec['max_pairwise_distance']:.4f} "
                f"(at {rec['max_distance_time_periods']:.1f}T), "
                f"final min/max {rec['min_final_distance']:.4f}/{rec['max_final_distance']:.4f}, "
                f"overlap {rec['mean_overlap']:.3f}"
            )
        else:
            print(f"square {index}: {rec['n_failed']} of {rec['n_members']} failed")


def cmd_ensemble(args) -> int:
    spec = _resolve_spec(args)
    # ensemble statistics tolerate a looser per-step bound than single
    # trajectories; the default trades 5th-order slack for a big speedup
    config = _config(args, default_abstol=1e-6)
    out = _outdir(args)
    if args.n < 1:
        raise _UsageError("--n must be at least 1")

    state = sample_initial(
        spec,
        args.dist,
        args.n,
        args.seed,
        radius=args.radius,
        center=_parse_point(args.center),
        sigma=args.sigma,
    )
    grid = HGrid(resolution=args.grid)
    records = [coarse_grained_H(state, spec, grid)]
    write_snapshot_csv(out / "snapshot_t0.csv", state, spec)

    for k in range(args.periods):
        state = evolve_ensemble(spec, state, TWO_PI, config)
        records.append(coarse_grained_H(state, spec, grid))
        print(f"t = {k + 1:d}T  hbar = {records[-1].hbar:.6f}  survivors = {len(state)}")

    write_snapshot_csv(out / f"snapshot_t{args.periods}T.csv", state, spec)
    write_h_series_csv(out / "h_series.csv", records)
    print(f"wrote {out / 'h_series.csv'}")

    if args.plot:
        counts, _, _ = np.histogram2d(state.q2, state.q1, bins=(grid.edges(), grid.edges()))
        write_svg(
            out / "final_density.svg",
            grid_svg(
                counts,
                grid.bounds,
                note_lines=[
                    f"ensemble density at {args.periods}T "
                    f"({state.initial_density_tag}, n={args.n}, seed={args.seed})",
                    f"digest = {state.spec_fingerprint[:16]}",
                ],
            ),
        )
        print(f"wrote {out / 'final_density.svg'}")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="pilotwave", description=__doc__)
    parser.add_argument("--version", action="version", version=f"pilotwave {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_spec_flags(p):
        p.add_argument("--scenario", help="catalog scenario name or scenario .json file")
        p.add_argument("--spec-file", help="wave-function spec text file")
        p.add_argument("--epsilon", type=float, help="homogeneous perturbation amplitude")
        p.add_argument("--modes", choices=("four", "five"), default="four")
        p.add_argument("--phases", choices=("fn3", "fn4", "fn5", "fn7", "fn8"), default="fn3")

    def add_common(p):
        p.add_argument("--abstol", type=float, default=None, help="per-step error bound")
        p.add_argument("--out", help=f"output directory (default ${OUTPUT_ENV} or ./pilotwave-out)")

    p_traj = sub.add_parser("trajectory", help="integrate one trajectory")
    add_spec_flags(p_traj)
    add_common(p_traj)
    p_traj.add_argument("--start", required=True, help="start point 'x,y'")
    p_traj.add_argument("--periods", type=float, required=True, help="horizon in periods")
    p_traj.add_argument("--svg", action="store_true", help="render the figure")
    p_traj.add_argument("--stride", type=int, default=3, help="plot decimation stride")
    p_traj.add_argument("--verify", action="store_true", help="run the tolerance-refinement check")
    p_traj.add_argument("--checkpoints", action="store_true", help="print the width/height series")
    p_traj.set_defaults(func=cmd_trajectory)

    p_sweep = sub.add_parser("sweep", help="run a scenario over its start points")
    add_common(p_sweep)
    p_sweep.add_argument("--scenario", help="catalog scenario name or scenario .json file")
    p_sweep.add_argument("--periods", type=int, help="override horizon in periods")
    p_sweep.add_argument("--points", type=int, nargs="+", help="subset of 1-based start indices")
    p_sweep.add_argument("--workers", type=int, default=1, help="parallel trajectory workers")
    p_sweep.add_argument("--expect", action="store_true", help="exit 3 on expectation mismatch")
    p_sweep.add_argument("--no-svg", action="store_true", help="skip figures")
    p_sweep.add_argument("--list", action="store_true", help="list catalog scenarios")
    p_sweep.set_defaults(func=cmd_sweep)

    p_ens = sub.add_parser("ensemble", help="evolve an ensemble and record the H-function")
    add_spec_flags(p_ens)
    add_common(p_ens)
    p_ens.add_argument("--dist", default="disk", choices=("ground-born", "disk", "gaussian", "born"))
    p_ens.add_argument("--n", type=int, required=True, help="ensemble size")
    p_ens.add_argument("--seed", type=int, default=0)
    p_ens.add_argument("--periods", type=int, required=True, help="horizon in periods")
    p_ens.add_argument("--grid", type=int, default=30, help="coarse-graining cells per side")
    p_ens.add_argument("--radius", type=float, default=1.0, help="disk radius")
    p_ens.add_argument("--center", default="0,0", help="disk/gaussian center 'x,y'")
    p_ens.add_argument("--sigma", type=float, default=0.1, help="gaussian width")
    p_ens.add_argument("--plot", action="store_true", help="render density heat map")
    p_ens.set_defaults(func=cmd_ensemble)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        # ensemble abstol default: statistics tolerate a looser per-step bound
        if getattr(args, "command", None) == "ensemble" and "--abstol" not in (argv or sys.argv):
            args.abstol = 1e-6
        return args.func(args)
    except _UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (PilotWaveError, StepUnderflowError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
