"""Command-line front-end: run, analyze, field, validate.

Each subcommand loads a JSON run document, applies --override flags, and
writes delimited outputs plus rendered figures into the output directory.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import analysis, config, geometry, simulation
from .errors import SchemaError, Unsupported, UnknownReach

log = logging.getLogger("spfnav")


def _setup_logging():
    level = os.environ.get("SPF_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _load(args) -> config.RunDocument:
    with open(args.config, encoding="utf-8") as fh:
        doc = json.load(fh)
    for item in args.override or []:
        if "=" not in item:
            raise SchemaError(f"override '{item}' is not of the form key=value")
        key, value = item.split("=", 1)
        config.apply_override(doc, key, value)
    document = config.document_from_dict(doc)
    if args.out is not None:
        document.out_dir = args.out
    if getattr(args, "seed", None) is not None and document.random_initials:
        document.random_initials["seed"] = args.seed
    return document


def _check_feasibility(document: config.RunDocument) -> geometry.FeasibilityReport | None:
    try:
        report = geometry.validate_feasibility(document.world, document.robot,
                                               document.penalty)
    except UnknownReach as exc:
        log.warning("feasibility not verifiable: %s", exc)
        return None
    return report


def _gather_initials(document: config.RunDocument):
    initials = list(document.initials)
    if document.random_initials:
        initials.extend(simulation.sample_initial_conditions(
            document.world, document.robot,
            int(document.random_initials["count"]),
            int(document.random_initials["seed"]),
            min_margin=float(document.random_initials.get("min_margin", 0.05)),
        ))
    return initials


def _write_trajectory_csv(path: Path, traj, dim: int):
    cols = (["t"] + [f"x{i}" for i in range(dim)] + [f"u{i}" for i in range(dim)]
            + ["d", "s", "w", "V"])
    data = np.column_stack([traj.t, traj.x, traj.u, traj.d, traj.s, traj.w,
                            traj.V])
    np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="")


def _run_chunk(payload):
    document_dict, starts = payload
    document = config.document_from_dict(document_dict)
    return simulation.batch_simulate(document.sim, starts)


def cmd_run(args) -> int:
    try:
        document = _load(args)
    except (SchemaError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    report = _check_feasibility(document)
    if report is not None and not report.passed:
        print("error: feasibility conditions violated: "
              + "; ".join(report.failures), file=sys.stderr)
        return 1

    initials = _gather_initials(document)
    if not initials:
        print("error: no initial conditions configured", file=sys.stderr)
        return 1

    jobs = max(1, args.jobs)
    if jobs == 1 or len(initials) < 2 * jobs:
        trajectories = simulation.batch_simulate(document.sim, initials)
    else:
        chunks = np.array_split(np.asarray(initials, dtype=float), jobs)
        payloads = [(document.to_dict(), chunk) for chunk in chunks if len(chunk)]
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_chunk, payloads))
        trajectories = [t for chunk in results for t in chunk]

    out = Path(document.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dim = document.world.dimension
    worst_margin = min(t.min_margin for t in trajectories)
    max_dv = max(t.max_v_increase for t in trajectories)
    n_reached = sum(t.termination == "reached_goal" for t in trajectories)

    for i, traj in enumerate(trajectories):
        if "csv" in document.formats:
            _write_trajectory_csv(out / f"trajectory_{i:03d}.csv", traj, dim)
        if "json" in document.formats:
            with open(out / f"trajectory_{i:03d}.summary.json", "w",
                      encoding="utf-8") as fh:
                json.dump(traj.summary(), fh, indent=2)

    aggregate = {
        "n_runs": len(trajectories),
        "n_reached": n_reached,
        "worst_min_margin": worst_margin,
        "max_v_increase": max_dv,
        "terminations": {t.termination: sum(
            1 for x in trajectories if x.termination == t.termination)
            for t in trajectories},
    }
    with open(out / "report.json", "w", encoding="utf-8") as fh:
        json.dump(aggregate, fh, indent=2)

    if "png" in document.formats:
        from . import plotting
        plotting.save_run_figure(out / "trajectories.png", document.world,
                                 document.robot, document.penalty,
                                 document.potential, trajectories)
        plotting.save_timeseries_figure(out / "timeseries.png", trajectories)

    faults = sum(t.termination == "safety_fault" for t in trajectories)
    print(f"{len(trajectories)} runs: {n_reached} reached goal, "
          f"{faults} safety faults, worst margin {worst_margin:.3e}")
    return 0 if faults == 0 else 1


def cmd_analyze(args) -> int:
    try:
        document = _load(args)
    except (SchemaError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        reports = analysis.find_equilibria(document.world, document.potential,
                                           document.robot)
    except analysis.NoBoundary:
        reports = []
    out = Path(document.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "equilibria.json", "w", encoding="utf-8") as fh:
        json.dump([r.to_dict() for r in reports], fh, indent=2)
    if "png" in document.formats and document.world.dimension == 2 \
            and document.world.obstacles:
        from . import plotting
        plotting.save_equilibria_figure(out / "equilibria.png", document.world,
                                        document.robot, document.potential,
                                        reports)
    bad = [r for r in reports if not r.unstable or r.indefinite]
    for r in reports:
        verdict = "indefinite" if r.indefinite else (
            "unstable" if r.unstable else "stable")
        print(f"obstacle {r.obstacle_index}: equilibrium at "
              f"{np.array2string(r.location, precision=6)} "
              f"lambda={r.lam:.6g} [{verdict}]")
    if bad:
        print(f"{len(bad)} equilibrium(s) not provably unstable", file=sys.stderr)
        return 2
    print(f"{len(reports)} equilibria located, all unstable")
    return 0


def cmd_field(args) -> int:
    try:
        document = _load(args)
    except (SchemaError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        if document.world.dimension != 2:
            raise Unsupported("field emission is 2D only")
    except Unsupported as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1

    grid = (args.grid, args.grid)
    points, vectors, weights = simulation.emit_vector_field(document.sim, grid)
    out = Path(document.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    data = np.column_stack([points, vectors, weights])
    np.savetxt(out / "field.csv", data, delimiter=",",
               header="x0,x1,v0,v1,w", comments="")

    lo, hi = document.world.bounds.lo, document.world.bounds.hi
    xs = np.linspace(lo[0], hi[0], 241)
    ys = np.linspace(lo[1], hi[1], 241)
    mesh = np.meshgrid(xs, ys, indexing="ij")
    grid_pts = np.stack([m.ravel() for m in mesh], axis=1)
    raw = document.world.distance_values(grid_pts).reshape(241, 241)
    from .contours import extract_contours
    rows = []
    for level_name, level in (("margin0", document.robot.clearance),
                              ("mu", document.robot.clearance
                               + document.penalty.mu)):
        for loop_id, loop in enumerate(extract_contours(xs, ys, raw, level)):
            for p in loop:
                rows.append((level_name, loop_id, p[0], p[1]))
    with open(out / "contours.csv", "w", encoding="utf-8") as fh:
        fh.write("level,loop,x0,x1\n")
        for name, loop_id, x0, x1 in rows:
            fh.write(f"{name},{loop_id},{float(x0)!r},{float(x1)!r}\n")

    if "png" in document.formats:
        from . import plotting
        plotting.save_field_figure(out / "field.png", document.world,
                                   document.robot, document.penalty,
                                   document.potential, points, vectors, weights)
    print(f"{len(points)} field samples written")
    return 0


def cmd_validate(args) -> int:
    try:
        document = _load(args)
    except (SchemaError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    report = _check_feasibility(document)
    if report is None:
        print("document valid; feasibility not verifiable for spline/implicit "
              "worlds (user-asserted)")
        return 0
    print(f"document valid; h = rho = {report.h:.6g}")
    if not report.passed:
        for failure in report.failures:
            print(f"feasibility violation: {failure}", file=sys.stderr)
        return 1
    print("feasibility conditions hold")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spfnav",
        description="Smooth penalty-based safe navigation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="run document path")
        p.add_argument("--override", action="append", metavar="KEY=VALUE",
                       help="override a document entry (repeatable)")
        p.add_argument("--out", default=None, help="output directory override")

    p_run = sub.add_parser("run", help="simulate the configured batch")
    common(p_run)
    p_run.add_argument("--seed", type=int, default=None,
                       help="override the random-initials seed")
    p_run.add_argument("--jobs", type=int, default=1,
                       help="parallel worker processes")
    p_run.set_defaults(func=cmd_run)

    p_an = sub.add_parser("analyze", help="locate and classify equilibria")
    common(p_an)
    p_an.set_defaults(func=cmd_analyze)

    p_field = sub.add_parser("field", help="emit the closed-loop vector field")
    common(p_field)
    p_field.add_argument("--grid", type=int, default=100,
                         help="grid resolution per axis")
    p_field.set_defaults(func=cmd_field)

    p_val = sub.add_parser("validate", help="check a document and feasibility")
    common(p_val)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
