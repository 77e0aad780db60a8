"""``trajalign`` command line: align, build-rm, localize, simulate, eval."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Sequence

from trajalign import io
from trajalign.optimizer import SolverError
from trajalign.pipeline import align, associate_all
from trajalign.radiomap import build_radio_map_from_positions, error_cdf, localize_all
from trajalign.sim import Scenario, evaluate_alignment, preset, simulate

logger = logging.getLogger("trajalign")

EXIT_OK = 0
EXIT_FAILURE = 1
# 2 is argparse's usage error
EXIT_PARSE = 3
EXIT_NOT_CONVERGED = 4
EXIT_EMPTY = 5

# Vicinity weight written into simulated configs; see README for why the
# default of 1.0 over-contracts long crowded scenarios.
RECOMMENDED_OMEGA_WIFI = 0.05


class EmptyInput(Exception):
    pass


def _read_trajectories(paths: Sequence[str]):
    trajs = [t for p in paths for t in io.read_trajectories(p)]
    ids = [t.id for t in trajs]
    if len(set(ids)) != len(ids):
        raise ValueError(f"duplicate trajectory ids across inputs: {sorted(ids)}")
    return trajs


def _read_scans(paths: Sequence[str]):
    scans, clamped = [], 0
    for p in paths:
        log = io.read_scans(p)
        scans.extend(log.scans)
        clamped += log.clamped
    if clamped:
        logger.warning("clamped %d RSS readings into [-110, 0] dBm", clamped)
    return scans


def cmd_align(args: argparse.Namespace) -> int:
    cfg = io.load_config(args.config)
    trajs = _read_trajectories(args.trajectories)
    if not trajs:
        raise EmptyInput("no trajectories")
    scans = _read_scans(args.scans)
    result = align(trajs, scans, cfg.build, cfg.solver)
    out = Path(args.out)
    io.write_trajectories(out / "aligned.traj", result.aligned_trajectories(trajs))
    (out / "solve_report.txt").write_text(result.report.to_text(), encoding="utf-8")
    print(f"aligned {len(trajs)} trajectories, {len(result.graph)} nodes, "
          f"{len(result.graph.vicinity_edges)} vicinity edges; cost {result.report.initial_cost:.6f} -> "
          f"{result.report.final_cost:.6f} ({result.report.convergence_reason})")
    if result.dropped_scans:
        logger.warning("%d scans could not be associated with a step", result.dropped_scans)
    return EXIT_OK if result.report.converged else EXIT_NOT_CONVERGED


def cmd_build_rm(args: argparse.Namespace) -> int:
    cfg = io.load_config(args.config)
    trajs = _read_trajectories(args.trajectories)
    if not trajs:
        raise EmptyInput("no trajectories")
    scans = _read_scans(args.scans)
    if not scans:
        logger.warning("no scans: writing an empty radio map")
    fps, _ = associate_all(trajs, scans, cfg.build.association_slack_s)
    positions = {n: (p.x, p.y) for t in trajs for n, p in zip(t.node_ids(), t.poses)}
    grid = args.grid_size if args.grid_size is not None else cfg.grid_size
    rm = build_radio_map_from_positions(fps, positions, grid)
    io.write_radio_map(Path(args.out) / "radiomap.txt", rm)
    print(f"radio map: {len(rm)} entries at grid {grid:g} m")
    return EXIT_OK


def cmd_localize(args: argparse.Namespace) -> int:
    cfg = io.load_config(args.config)
    rm = io.read_radio_map(args.radio_map)
    if rm.is_empty:
        raise EmptyInput("radio map is empty")
    scans = _read_scans([args.scans])
    k = args.k if args.k is not None else cfg.k
    results = localize_all(rm, scans, k)
    records = [
        io.PositionRecord(q, s.timestamp, *r.estimated_position)
        for q, (s, r) in enumerate(zip(scans, results))
    ]
    io.write_positions(Path(args.out) / "estimates.txt", records)
    print(f"localized {len(records)} scans with k={k}")
    return EXIT_OK


def cmd_simulate(args: argparse.Namespace) -> int:
    source = Path(args.scenario)
    if source.suffix == ".json" or source.exists():
        scenario = Scenario.from_dict(json.loads(source.read_text(encoding="utf-8")))
        if args.seed is not None:
            scenario.seed = args.seed
    else:
        scenario = preset(args.scenario, args.seed)
    ds = simulate(scenario)
    out = Path(args.out)
    io.write_trajectories(out / "truth.traj", ds.truth)
    io.write_trajectories(out / "raw.traj", ds.raw)
    io.write_scans(out / "scans.log", ds.scans)
    io.write_scans(out / "queries.log", ds.queries)
    io.write_positions(out / "query_truth.txt", [
        io.PositionRecord(q, s.timestamp, float(p[0]), float(p[1]))
        for q, (s, p) in enumerate(zip(ds.queries, ds.query_positions))
    ])
    io.write_landmarks(out / "landmarks.txt", ds.landmarks)
    io.save_json(out / "scenario.json", scenario.to_dict())
    cfg = io.PipelineConfig()
    cfg.build.omega_wifi = RECOMMENDED_OMEGA_WIFI
    cfg.build.fixed_trajectory = scenario.reference
    cfg.build.seeds = {scenario.reference: ds.reference_seed}
    # the weakly determined global orientation can take a few hundred damped steps
    cfg.solver.max_iterations = 1000
    io.save_json(out / "config.json", cfg.to_dict())
    print(f"simulated {scenario.name} (seed {scenario.seed}): {len(ds.truth)} walks, "
          f"{sum(len(t) for t in ds.truth)} steps, {len(ds.queries)} queries")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    out = Path(args.out)
    if args.mode == "alignment":
        est = {t.id: t.as_array() for t in io.read_trajectories(args.estimates)}
        truth = {t.id: t.as_array() for t in io.read_trajectories(args.truth)}
        if not truth:
            raise EmptyInput("no truth trajectories")
        landmarks = io.read_landmarks(args.landmarks) if args.landmarks else []
        metrics = evaluate_alignment(est, truth, landmarks, args.reference)
        summary = metrics.to_dict()
        summary["heading_errors_deg"] = {str(k): v for k, v in sorted(metrics.heading_errors_deg.items())}
    else:
        est = io.read_positions(args.estimates)
        truth = io.read_positions(args.truth)
        if not truth:
            raise EmptyInput("no truth positions")
        if len(est) != len(truth):
            raise ValueError(f"{len(est)} estimates but {len(truth)} truth records")
        by_id = {r.query_id: r for r in truth}
        if len(by_id) != len(truth) or {r.query_id for r in est} != set(by_id):
            raise ValueError("estimate and truth query ids differ")
        pairs = [((r.x, r.y), (by_id[r.query_id].x, by_id[r.query_id].y)) for r in est]
        report = error_cdf(pairs)
        io.write_cdf(out / "cdf.txt", report)
        summary = {"n": len(pairs), "mean_m": report.mean, "std_m": report.std, "median_m": report.median,
                   "max_m": report.max, "p_under_10m": report.p_under_10m}
    io.save_json(out / "metrics.json", summary)
    for key, value in summary.items():
        if not isinstance(value, dict):
            print(f"{key} {value:.6f}" if isinstance(value, float) else f"{key} {value}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON pipeline configuration")
    common.add_argument("--seed", type=int, help="scenario seed (simulate only; other commands are deterministic)")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="trajalign", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("align", parents=[common], help="align PDR trajectories with WiFi vicinity constraints")
    p.add_argument("trajectories", nargs="+", help="trajectory logs")
    p.add_argument("--scans", nargs="*", default=[], help="scan logs")
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("build-rm", parents=[common], help="radio map from aligned trajectories and their scans")
    p.add_argument("trajectories", nargs="+", help="aligned trajectory logs")
    p.add_argument("--scans", nargs="*", default=[], help="scan logs")
    p.add_argument("--grid-size", type=float, help="bin size in meters (default from config, 1.0)")
    p.set_defaults(func=cmd_build_rm)

    p = sub.add_parser("localize", parents=[common], help="kNN localization of query scans")
    p.add_argument("radio_map")
    p.add_argument("scans", help="scan log of query fingerprints")
    p.add_argument("-k", type=int, help="neighbours (default from config, 3)")
    p.set_defaults(func=cmd_localize)

    p = sub.add_parser("simulate", parents=[common], help="generate a synthetic dataset")
    p.add_argument("scenario", help="preset name (corridor-12, campus-5, dense-vs-sparse, noiseless) or scenario JSON")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("eval", parents=[common], help="error metrics against truth")
    p.add_argument("estimates")
    p.add_argument("truth")
    p.add_argument("--mode", choices=("positions", "alignment"), default="positions")
    p.add_argument("--landmarks", help="landmark visits file (alignment mode)")
    p.add_argument("--reference", type=int, default=0, help="reference trajectory (alignment mode)")
    p.set_defaults(func=cmd_eval)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except io.ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except EmptyInput as exc:
        print(f"empty input: {exc}", file=sys.stderr)
        return EXIT_EMPTY
    except SolverError as exc:
        print(f"solver failed: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
