"""Pose-graph construction from PDR trajectories and WiFi fingerprints.

Two constraint families make up the cost

    F = sum_odometry e^T Omega e  +  sum_vicinity omega_wifi * e_wifi(d)

where ``e`` is the body-frame increment mismatch between consecutive poses
and ``e_wifi`` is a bounded ramp in the planar distance ``d`` between two
nodes that look alike in RSS space.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from trajalign.core import (
    BodyIncrement,
    NodeId,
    Pose,
    PoseGraph,
    RssFingerprint,
    RssScan,
    Trajectory,
    relative_increment,
    transform_poses,
    wrap_angles,
)
from trajalign.rss import compute_thresholds, vicinity_candidates

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class BuildConfig:
    """Graph-construction parameters.

    ``seeds`` maps a trajectory index to an ``(x, y, rotation)`` rigid
    transform applied to that trajectory's raw poses to form the initial
    guess; unlisted trajectories start from their raw PDR frame.
    """

    mu: float = 20.0
    omega_wifi: float = 1.0
    e_max: float = 1.0
    d_min_m: float = 2.0
    d_max_m: float = 30.0
    window_L: int = 10
    t_gap_steps: int = 30
    d_gap_m: float = 5.0
    cap_per_node: int = 5
    fixed_trajectory: int = 0
    ramp_extension: bool = False
    association_slack_s: float = 2.0
    seeds: dict[int, tuple[float, float, float]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.omega_wifi < 0:
            raise ValueError("omega_wifi must be non-negative")
        if self.e_max <= 0:
            raise ValueError("e_max must be positive")
        if not 0 <= self.d_min_m < self.d_max_m:
            raise ValueError("need 0 <= d_min_m < d_max_m")
        if self.window_L < 2 or self.window_L % 2:
            raise ValueError("window_L must be an even integer >= 2")
        if self.t_gap_steps < 0 or self.d_gap_m < 0 or self.cap_per_node < 0:
            raise ValueError("t_gap_steps, d_gap_m and cap_per_node must be non-negative")
        self.seeds = {int(k): tuple(float(v) for v in s) for k, s in self.seeds.items()}


@dataclass(frozen=True, slots=True)
class OdometryEdge:
    source: NodeId
    target: NodeId
    u: BodyIncrement
    omega: tuple[tuple[float, ...], ...]

    @property
    def information(self) -> np.ndarray:
        return np.array(self.omega, dtype=float)


def odometry_information(mu: float = 20.0) -> tuple[tuple[float, ...], ...]:
    """Diagonal information matrix: unit weight on distances, ``mu`` on heading."""
    return ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, float(mu)))


@dataclass(frozen=True, slots=True)
class VicinityEdge:
    a: NodeId
    b: NodeId
    rss_d: float
    weight: float = 1.0
    d_min: float = 2.0
    d_max: float = 30.0
    e_max: float = 1.0
    ramp_extension: bool = False

    def __post_init__(self) -> None:
        if not self.d_min < self.d_max:
            raise ValueError("vicinity edge needs d_min < d_max")
        if self.e_max <= 0 or self.weight < 0:
            raise ValueError("vicinity edge needs e_max > 0 and weight >= 0")


def imu_error(edge: OdometryEdge, pose_a: Pose, pose_b: Pose) -> np.ndarray:
    """Increment implied by the two poses minus the measured increment."""
    implied = relative_increment(pose_a, pose_b)
    e = np.array(implied, dtype=float) - np.array(edge.u, dtype=float)
    e[2] = wrap_angles(e[2])
    return e


def ramp_error(d, d_min: float, d_max: float, e_max: float, ramp_extension: bool = False):
    """Piecewise-linear vicinity inconsistency for planar distance ``d``.

    Zero below ``d_min``, ``e_max`` above ``d_max`` and linear in between.
    With ``ramp_extension`` the linear piece continues past ``d_max``.
    Works on scalars and numpy arrays.
    """
    d = np.asarray(d, dtype=float)
    e = e_max * (d - d_min) / (d_max - d_min)
    e = np.where(d < d_min, 0.0, e)
    if not ramp_extension:
        e = np.where(d > d_max, e_max, e)
    return e if e.ndim else float(e)


def wifi_error(edge: VicinityEdge, pose_a: Pose, pose_b: Pose) -> float:
    d = math.hypot(pose_b.x - pose_a.x, pose_b.y - pose_a.y)
    return ramp_error(d, edge.d_min, edge.d_max, edge.e_max, edge.ramp_extension)


class EdgeArrays:
    """Edge data packed into index/parameter arrays for batched evaluation."""

    def __init__(self, graph: PoseGraph):
        odo = graph.odometry_edges
        self.odo_a = np.array([graph.index(e.source) for e in odo], dtype=int)
        self.odo_b = np.array([graph.index(e.target) for e in odo], dtype=int)
        self.odo_u = np.array([e.u for e in odo], dtype=float).reshape(-1, 3)
        self.odo_omega = np.array([e.omega for e in odo], dtype=float).reshape(-1, 3, 3)
        vic = graph.vicinity_edges
        self.vic_a = np.array([graph.index(e.a) for e in vic], dtype=int)
        self.vic_b = np.array([graph.index(e.b) for e in vic], dtype=int)
        self.vic_w = np.array([e.weight for e in vic], dtype=float)
        self.vic_dmin = np.array([e.d_min for e in vic], dtype=float)
        self.vic_dmax = np.array([e.d_max for e in vic], dtype=float)
        self.vic_emax = np.array([e.e_max for e in vic], dtype=float)
        self.vic_ramp = np.array([e.ramp_extension for e in vic], dtype=bool)

    def odometry_residuals(self, X: np.ndarray) -> np.ndarray:
        pa, pb = X[self.odo_a], X[self.odo_b]
        c, s = np.cos(pa[:, 2]), np.sin(pa[:, 2])
        wx, wy = pb[:, 0] - pa[:, 0], pb[:, 1] - pa[:, 1]
        e = np.empty((len(self.odo_a), 3))
        e[:, 0] = c * wx + s * wy - self.odo_u[:, 0]
        e[:, 1] = -s * wx + c * wy - self.odo_u[:, 1]
        e[:, 2] = wrap_angles(pb[:, 2] - pa[:, 2] - self.odo_u[:, 2])
        return e

    def distances(self, X: np.ndarray) -> np.ndarray:
        delta = X[self.vic_b, :2] - X[self.vic_a, :2]
        return np.hypot(delta[:, 0], delta[:, 1])

    def wifi_errors(self, X: np.ndarray) -> np.ndarray:
        d = self.distances(X)
        e = self.vic_emax * (d - self.vic_dmin) / (self.vic_dmax - self.vic_dmin)
        e = np.where(d < self.vic_dmin, 0.0, e)
        return np.where((d > self.vic_dmax) & ~self.vic_ramp, self.vic_emax, e)

    def cost_terms(self, X: np.ndarray) -> tuple[float, float]:
        """Odometry and WiFi parts of the total cost at estimates ``X``."""
        e = self.odometry_residuals(X)
        f1 = float(np.einsum("ei,eij,ej->", e, self.odo_omega, e)) if len(e) else 0.0
        f2 = float(np.dot(self.vic_w, self.wifi_errors(X))) if len(self.vic_a) else 0.0
        return f1, f2

    def cost(self, X: np.ndarray) -> float:
        f1, f2 = self.cost_terms(X)
        return f1 + f2


def total_cost(graph: PoseGraph) -> float:
    """Total constraint cost of the graph at its current estimates."""
    return EdgeArrays(graph).cost(graph.estimates)


def associate_fingerprints(
    trajectory: Trajectory,
    scans: Sequence[RssScan],
    slack_s: float = 2.0,
) -> tuple[list[RssFingerprint], int]:
    """Attach scans to the step nearest in time.

    Scans of other trajectories are ignored. A scan more than ``slack_s``
    outside the trajectory's time span is dropped. Several scans landing on
    one step are merged AP by AP with an arithmetic mean of the dBm values.

    Returns the fingerprints in step order and the number of dropped scans.
    """
    ts = np.asarray(trajectory.timestamps)
    sums: dict[int, dict[str, list[float]]] = {}
    dropped = 0
    for scan in scans:
        if scan.trajectory_index != trajectory.id:
            continue
        t = scan.timestamp
        if t < ts[0] - slack_s or t > ts[-1] + slack_s:
            dropped += 1
            continue
        j = int(np.searchsorted(ts, t))
        if j == len(ts):
            k = j - 1
        elif j == 0:
            k = 0
        else:
            k = j - 1 if t - ts[j - 1] <= ts[j] - t else j
        per_ap = sums.setdefault(k, {})
        for ap, v in scan.readings.items():
            per_ap.setdefault(ap, []).append(v)
    if dropped:
        logger.warning("trajectory %d: dropped %d scan(s) outside the time span", trajectory.id, dropped)
    fps = [
        RssFingerprint(
            NodeId(trajectory.id, k + 1),
            {ap: float(np.mean(vals)) for ap, vals in sorted(per_ap.items())},
            float(ts[k]),
        )
        for k, per_ap in sorted(sums.items())
    ]
    return fps, dropped


def _suppressor(fps_sorted: Sequence[RssFingerprint], raw_xy: Mapping[NodeId, tuple[float, float]], config: BuildConfig):
    traj = np.array([fp.node.trajectory_index for fp in fps_sorted])
    step = np.array([fp.node.step_index for fp in fps_sorted])
    xy = np.array([raw_xy[fp.node] for fp in fps_sorted], dtype=float).reshape(-1, 2)

    def suppress(i: int, earlier: np.ndarray) -> np.ndarray:
        same = traj[earlier] == traj[i]
        near_t = np.abs(step[earlier] - step[i]) < config.t_gap_steps
        d = np.hypot(xy[earlier, 0] - xy[i, 0], xy[earlier, 1] - xy[i, 1])
        return same & (near_t | (d < config.d_gap_m))

    return suppress


def build_graph(
    trajectories: Sequence[Trajectory],
    fingerprints: Sequence[RssFingerprint],
    config: BuildConfig | None = None,
) -> PoseGraph:
    """Assemble the pose graph.

    Odometry edges join consecutive steps of each trajectory and carry the
    increments of the raw PDR poses, so the raw solution has zero odometry
    error. Vicinity edges come from the RSS-space candidate scan; pairs
    from one trajectory are skipped when they are fewer than
    ``t_gap_steps`` apart or closer than ``d_gap_m`` in the raw PDR frame.
    """
    config = config or BuildConfig()
    if not trajectories:
        raise ValueError("no trajectories given")
    trajectories = sorted(trajectories, key=lambda t: t.id)
    ids = [t.id for t in trajectories]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate trajectory index")
    if config.fixed_trajectory not in ids:
        raise ValueError(f"fixed trajectory {config.fixed_trajectory} not among inputs {ids}")

    node_ids: list[NodeId] = []
    blocks: list[np.ndarray] = []
    odometry: list[OdometryEdge] = []
    raw_xy: dict[NodeId, tuple[float, float]] = {}
    omega = odometry_information(config.mu)
    for traj in trajectories:
        raw = traj.as_array()
        nodes = traj.node_ids()
        node_ids.extend(nodes)
        blocks.append(transform_poses(raw, config.seeds.get(traj.id, (0.0, 0.0, 0.0))))
        for n, p in zip(nodes, raw):
            raw_xy[n] = (p[0], p[1])
        for k in range(len(traj) - 1):
            odometry.append(
                OdometryEdge(nodes[k], nodes[k + 1], relative_increment(traj.poses[k], traj.poses[k + 1]), omega)
            )

    seen: set[NodeId] = set()
    for fp in fingerprints:
        if fp.node not in raw_xy:
            raise ValueError(f"fingerprint references unknown node {fp.node}")
        if fp.node in seen:
            raise ValueError(f"two fingerprints for node {fp.node}")
        seen.add(fp.node)

    vicinity: list[VicinityEdge] = []
    if fingerprints:
        fps_sorted = sorted(fingerprints, key=lambda fp: fp.node)
        thresholds = compute_thresholds(fps_sorted, config.window_L)
        pairs = vicinity_candidates(
            fps_sorted, thresholds, _suppressor(fps_sorted, raw_xy, config), config.cap_per_node
        )
        vicinity = [
            VicinityEdge(a, b, d, config.omega_wifi, config.d_min_m, config.d_max_m, config.e_max, config.ramp_extension)
            for a, b, d in pairs
        ]
    logger.info(
        "built graph: %d nodes, %d odometry edges, %d vicinity edges",
        len(node_ids), len(odometry), len(vicinity),
    )
    return PoseGraph(node_ids, np.vstack(blocks), odometry, vicinity, NodeId(config.fixed_trajectory, 1))
