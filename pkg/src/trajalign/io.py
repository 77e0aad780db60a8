"""Line-oriented text formats and JSON configuration.

Every float is written with six decimals so that outputs are byte-stable;
reading a file and writing it again reproduces it exactly. Blank lines and
lines starting with ``#`` are ignored by the readers (the radio map header
is the one exception). Malformed input raises :class:`ParseError` naming
``file:line``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping, Sequence

import numpy as np

from trajalign.core import RSS_FLOOR_DBM, Pose, RssScan, Trajectory
from trajalign.graph import BuildConfig
from trajalign.optimizer import SolverConfig
from trajalign.radiomap import CdfReport, RadioMap, RadioMapEntry
from trajalign.sim import LandmarkVisit

PathLike = str | os.PathLike

RADIOMAP_VERSION = 1


class ParseError(ValueError):
    def __init__(self, path: PathLike, line: int, message: str):
        super().__init__(f"{path}:{line}: {message}")
        self.path = str(path)
        self.line = line


def fmt(v: float) -> str:
    s = f"{v:.6f}"
    return "0.000000" if s == "-0.000000" else s


def _records(path: PathLike) -> Iterator[tuple[int, list[str]]]:
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            text = line.strip()
            if text and not text.startswith("#"):
                yield n, text.split()


def _number(path: PathLike, n: int, token: str, what: str, kind=float):
    try:
        value = kind(token)
    except ValueError:
        raise ParseError(path, n, f"bad {what} {token!r}") from None
    if kind is float and not math.isfinite(value):
        raise ParseError(path, n, f"non-finite {what} {token!r}")
    return value


def _write(path: PathLike, lines: Iterable[str]) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def _check_token(name: str) -> str:
    if not name or any(c.isspace() for c in name):
        raise ValueError(f"identifier {name!r} must be non-empty without whitespace")
    return name


# -- trajectories ---------------------------------------------------------------

def write_trajectories(path: PathLike, trajectories: Sequence[Trajectory]) -> None:
    """``traj_id step t x y theta`` per line, trajectories in id order."""
    lines = ["# traj_id step t x y theta"]
    for traj in sorted(trajectories, key=lambda t: t.id):
        for k, (t, p) in enumerate(zip(traj.timestamps, traj.poses), start=1):
            lines.append(f"{traj.id} {k} {fmt(t)} {fmt(p.x)} {fmt(p.y)} {fmt(p.theta)}")
    _write(path, lines)


def read_trajectories(path: PathLike) -> list[Trajectory]:
    rows: dict[int, tuple[list[Pose], list[float]]] = {}
    for n, tok in _records(path):
        if len(tok) != 6:
            raise ParseError(path, n, f"expected 6 fields, got {len(tok)}")
        tid = _number(path, n, tok[0], "trajectory id", int)
        step = _number(path, n, tok[1], "step index", int)
        t, x, y, th = (_number(path, n, v, name) for v, name in zip(tok[2:], ("timestamp", "x", "y", "theta")))
        if tid < 0:
            raise ParseError(path, n, "negative trajectory id")
        poses, times = rows.setdefault(tid, ([], []))
        if step != len(poses) + 1:
            raise ParseError(path, n, f"trajectory {tid}: expected step {len(poses) + 1}, got {step}")
        if times and t <= times[-1]:
            raise ParseError(path, n, f"trajectory {tid}: timestamp {tok[2]} not increasing")
        poses.append(Pose(x, y, th))
        times.append(t)
    out = []
    for tid in sorted(rows):
        poses, times = rows[tid]
        if len(poses) < 2:
            raise ParseError(path, 0, f"trajectory {tid} has fewer than 2 poses")
        out.append(Trajectory(tid, poses, times))
    return out


# -- scans ----------------------------------------------------------------------

@dataclass(slots=True)
class ScanLog:
    scans: list[RssScan]
    clamped: int = 0


def write_scans(path: PathLike, scans: Sequence[RssScan]) -> None:
    """``traj_id t ap_id rss`` per reading, in the given scan order, APs sorted."""
    lines = ["# traj_id t ap_id rss_dbm"]
    for s in scans:
        for ap in sorted(s.readings):
            lines.append(f"{s.trajectory_index} {fmt(s.timestamp)} {_check_token(ap)} {fmt(s.readings[ap])}")
    _write(path, lines)


def read_scans(path: PathLike) -> ScanLog:
    """Group readings sharing ``(traj_id, t)`` into scans, clamping to [-110, 0]."""
    grouped: dict[tuple[int, float], dict[str, float]] = {}
    clamped = 0
    for n, tok in _records(path):
        if len(tok) != 4:
            raise ParseError(path, n, f"expected 4 fields, got {len(tok)}")
        tid = _number(path, n, tok[0], "trajectory id", int)
        t = _number(path, n, tok[1], "timestamp")
        rss = _number(path, n, tok[3], "rss")
        if rss < RSS_FLOOR_DBM or rss > 0.0:
            rss = min(max(rss, RSS_FLOOR_DBM), 0.0)
            clamped += 1
        readings = grouped.setdefault((tid, t), {})
        if tok[2] in readings:
            raise ParseError(path, n, f"duplicate AP {tok[2]!r} in scan ({tid}, {tok[1]})")
        readings[tok[2]] = rss
    return ScanLog([RssScan(tid, t, r) for (tid, t), r in grouped.items()], clamped)


# -- radio maps -----------------------------------------------------------------

def write_radio_map(path: PathLike, rm: RadioMap) -> None:
    """Header line, then ``x y n_samples ap:mean:count ...`` per entry."""
    lines = [f"# radiomap grid_size={fmt(rm.grid_size)} version={RADIOMAP_VERSION}"]
    for e in rm.entries:
        cells = " ".join(f"{_check_token(ap)}:{fmt(e.rss[ap])}:{e.counts[ap]}" for ap in sorted(e.rss))
        lines.append(f"{fmt(e.position[0])} {fmt(e.position[1])} {e.n_samples} {cells}".rstrip())
    _write(path, lines)


def read_radio_map(path: PathLike) -> RadioMap:
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("# radiomap"):
        raise ParseError(path, 1, "missing '# radiomap' header")
    meta = dict(item.split("=", 1) for item in lines[0].split()[2:] if "=" in item)
    if meta.get("version") != str(RADIOMAP_VERSION):
        raise ParseError(path, 1, f"unsupported radio map version {meta.get('version')!r}")
    grid = _number(path, 1, meta.get("grid_size", ""), "grid_size")
    entries = []
    for n, text in enumerate(lines[1:], start=2):
        tok = text.split()
        if not tok or tok[0].startswith("#"):
            continue
        if len(tok) < 3:
            raise ParseError(path, n, "expected x y n_samples [ap:mean:count ...]")
        x, y = _number(path, n, tok[0], "x"), _number(path, n, tok[1], "y")
        ns = _number(path, n, tok[2], "sample count", int)
        rss, counts = {}, {}
        for cell in tok[3:]:
            # AP ids such as BSSIDs contain ':' themselves
            parts = cell.rsplit(":", 2)
            if len(parts) != 3 or not parts[0]:
                raise ParseError(path, n, f"bad cell {cell!r}")
            rss[parts[0]] = _number(path, n, parts[1], "rss")
            counts[parts[0]] = _number(path, n, parts[2], "count", int)
        entries.append(RadioMapEntry((x, y), rss, counts, ns))
    return RadioMap(entries, grid)


# -- positions, landmarks, CDFs ---------------------------------------------------

@dataclass(slots=True)
class PositionRecord:
    query_id: int
    timestamp: float
    x: float
    y: float


def write_positions(path: PathLike, records: Sequence[PositionRecord]) -> None:
    lines = ["# query_id t x y"]
    lines += [f"{r.query_id} {fmt(r.timestamp)} {fmt(r.x)} {fmt(r.y)}" for r in records]
    _write(path, lines)


def read_positions(path: PathLike) -> list[PositionRecord]:
    out = []
    for n, tok in _records(path):
        if len(tok) != 4:
            raise ParseError(path, n, f"expected 4 fields, got {len(tok)}")
        out.append(PositionRecord(
            _number(path, n, tok[0], "query id", int), _number(path, n, tok[1], "timestamp"),
            _number(path, n, tok[2], "x"), _number(path, n, tok[3], "y"),
        ))
    return out


def write_landmarks(path: PathLike, visits: Sequence[LandmarkVisit]) -> None:
    lines = ["# traj_id step x y"]
    lines += [f"{v.trajectory_index} {v.step_index} {fmt(v.x)} {fmt(v.y)}" for v in visits]
    _write(path, lines)


def read_landmarks(path: PathLike) -> list[LandmarkVisit]:
    out = []
    for n, tok in _records(path):
        if len(tok) != 4:
            raise ParseError(path, n, f"expected 4 fields, got {len(tok)}")
        step = _number(path, n, tok[1], "step index", int)
        if step < 1:
            raise ParseError(path, n, "step index must be >= 1")
        out.append(LandmarkVisit(_number(path, n, tok[0], "trajectory id", int), step,
                                 _number(path, n, tok[2], "x"), _number(path, n, tok[3], "y")))
    return out


def write_cdf(path: PathLike, report: CdfReport) -> None:
    """Two numeric columns: sorted error (m) and cumulative probability."""
    _write(path, ["# error_m probability"] + [f"{fmt(e)} {fmt(p)}" for e, p in report.rows()])


def read_cdf(path: PathLike) -> np.ndarray:
    rows = []
    for n, tok in _records(path):
        if len(tok) != 2:
            raise ParseError(path, n, f"expected 2 fields, got {len(tok)}")
        rows.append([_number(path, n, tok[0], "error"), _number(path, n, tok[1], "probability")])
    return np.array(rows, dtype=float).reshape(-1, 2)


# -- configuration ----------------------------------------------------------------

_BUILD_KEYS = {
    "mu": "mu", "omega_wifi": "omega_wifi", "e_max": "e_max", "d_min_m": "d_min_m", "d_max_m": "d_max_m",
    "window_L": "window_L", "t_gap_steps": "t_gap_steps", "d_gap_m": "d_gap_m", "cap_per_node": "cap_per_node",
    "fixed_trajectory": "fixed_trajectory", "ramp_extension": "ramp_extension",
    "association_slack_s": "association_slack_s",
}
_SOLVER_KEYS = {
    "algorithm": "algorithm", "max_iter": "max_iterations", "cost_tol": "cost_tolerance",
    "step_tol": "step_tolerance", "lambda_init": "lm_lambda_init", "lambda_up": "lm_lambda_up",
    "lambda_down": "lm_lambda_down",
}
_OTHER_KEYS = {"seeds", "grid_size", "k"}


@dataclass(slots=True)
class PipelineConfig:
    build: BuildConfig = field(default_factory=BuildConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    grid_size: float = 1.0
    k: int = 3

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PipelineConfig":
        unknown = set(data) - set(_BUILD_KEYS) - set(_SOLVER_KEYS) - _OTHER_KEYS
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        build = {attr: data[key] for key, attr in _BUILD_KEYS.items() if key in data}
        seeds = data.get("seeds", {})
        build["seeds"] = {int(k): tuple(float(v) for v in s) for k, s in seeds.items()}
        solver = {attr: data[key] for key, attr in _SOLVER_KEYS.items() if key in data}
        return cls(BuildConfig(**build), SolverConfig(**solver),
                   float(data.get("grid_size", 1.0)), int(data.get("k", 3)))

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {key: getattr(self.build, attr) for key, attr in _BUILD_KEYS.items()}
        out.update({key: getattr(self.solver, attr) for key, attr in _SOLVER_KEYS.items()})
        out["seeds"] = {str(k): list(v) for k, v in sorted(self.build.seeds.items())}
        out["grid_size"] = self.grid_size
        out["k"] = self.k
        return out


def load_config(path: PathLike | None) -> PipelineConfig:
    if path is None:
        return PipelineConfig()
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ParseError(path, exc.lineno, exc.msg) from None
    if not isinstance(data, dict):
        raise ParseError(path, 1, "config must be a JSON object")
    return PipelineConfig.from_dict(data)


def save_json(path: PathLike, data: Any) -> None:
    _write(path, [json.dumps(data, indent=2, sort_keys=True)])

