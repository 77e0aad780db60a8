"""Planar pose algebra and the shared domain types.

Heading convention: counterclockwise-positive radians in an x-east / y-north
world frame, normalized to the half-open interval (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# Missing-AP sentinel; readings weaker than this are clamped to it.
RSS_FLOOR_DBM = -110.0


def normalize_angle(theta: float) -> float:
    """Map ``theta`` into (-pi, pi], preserving it modulo 2*pi.

    Values already inside the interval are returned untouched, which makes
    the function exactly idempotent.
    """
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta!r}")
    if -math.pi < theta <= math.pi:
        return float(theta)
    r = math.pi - math.fmod(math.pi - theta, TWO_PI)
    if r > math.pi:
        r -= TWO_PI
    if r <= -math.pi:
        r = math.pi
    return r


def wrap_angles(theta: np.ndarray) -> np.ndarray:
    """Vectorized :func:`normalize_angle` for numpy arrays."""
    theta = np.asarray(theta, dtype=float)
    inside = (theta > -math.pi) & (theta <= math.pi)
    if inside.all():
        return theta.copy()
    r = math.pi - np.mod(math.pi - theta, TWO_PI)
    r = np.where(r <= -math.pi, math.pi, r)
    return np.where(inside, theta, r)


class NodeId(NamedTuple):
    """Graph node key; ``step_index`` is 1-based within its trajectory."""

    trajectory_index: int
    step_index: int


class BodyIncrement(NamedTuple):
    """Pose change expressed in the body frame of the earlier pose."""

    dx: float
    dy: float
    dtheta: float


@dataclass(frozen=True, slots=True)
class Pose:
    """Planar position in meters plus heading in radians."""

    x: float
    y: float
    theta: float

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"pose position must be finite, got ({self.x}, {self.y})")
        object.__setattr__(self, "x", float(self.x))
        object.__setattr__(self, "y", float(self.y))
        object.__setattr__(self, "theta", normalize_angle(float(self.theta)))

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.theta], dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "Pose":
        return cls(float(values[0]), float(values[1]), float(values[2]))


def compose_pose(prev: Pose, increment: BodyIncrement | Sequence[float]) -> Pose:
    """Apply a body-frame increment to ``prev`` (the PDR motion model)."""
    dx, dy, dth = increment
    c, s = math.cos(prev.theta), math.sin(prev.theta)
    return Pose(
        prev.x + dx * c - dy * s,
        prev.y + dx * s + dy * c,
        normalize_angle(prev.theta + dth),
    )


def relative_increment(a: Pose, b: Pose) -> BodyIncrement:
    """Body-frame increment taking ``a`` to ``b``; inverse of :func:`compose_pose`."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    wx, wy = b.x - a.x, b.y - a.y
    return BodyIncrement(c * wx + s * wy, -s * wx + c * wy, normalize_angle(b.theta - a.theta))


def transform_poses(poses: np.ndarray, origin: Sequence[float]) -> np.ndarray:
    """Express ``(N, 3)`` poses given relative to ``origin`` in the world frame.

    ``origin`` is ``(tx, ty, rotation)``; positions are rotated then shifted,
    headings are offset by the rotation.
    """
    poses = np.asarray(poses, dtype=float)
    tx, ty, rot = origin
    c, s = math.cos(rot), math.sin(rot)
    out = np.empty_like(poses)
    out[:, 0] = tx + c * poses[:, 0] - s * poses[:, 1]
    out[:, 1] = ty + s * poses[:, 0] + c * poses[:, 1]
    out[:, 2] = wrap_angles(poses[:, 2] + rot)
    return out


def integrate_increments(start: Pose, increments: Iterable[BodyIncrement]) -> list[Pose]:
    poses = [start]
    for inc in increments:
        poses.append(compose_pose(poses[-1], inc))
    return poses


@dataclass(slots=True)
class Trajectory:
    """Ordered poses of one walk with their step timestamps (seconds)."""

    id: int
    poses: list[Pose]
    timestamps: list[float]

    def __post_init__(self) -> None:
        if self.id < 0:
            raise ValueError("trajectory index must be non-negative")
        self.poses = list(self.poses)
        self.timestamps = [float(t) for t in self.timestamps]
        if len(self.poses) < 2:
            raise ValueError(f"trajectory {self.id} needs at least 2 poses")
        if len(self.timestamps) != len(self.poses):
            raise ValueError(f"trajectory {self.id}: {len(self.poses)} poses but {len(self.timestamps)} timestamps")
        ts = np.asarray(self.timestamps)
        if not np.all(np.isfinite(ts)) or np.any(np.diff(ts) <= 0):
            raise ValueError(f"trajectory {self.id}: timestamps must be finite and strictly increasing")

    def __len__(self) -> int:
        return len(self.poses)

    def node_ids(self) -> list[NodeId]:
        return [NodeId(self.id, k) for k in range(1, len(self.poses) + 1)]

    def as_array(self) -> np.ndarray:
        return np.array([[p.x, p.y, p.theta] for p in self.poses], dtype=float)

    @classmethod
    def from_array(cls, id: int, poses: np.ndarray, timestamps: Sequence[float]) -> "Trajectory":
        return cls(id, [Pose.from_array(row) for row in np.asarray(poses, dtype=float)], list(timestamps))


def _clean_readings(readings: Mapping[str, float]) -> dict[str, float]:
    out: dict[str, float] = {}
    for ap, value in readings.items():
        value = float(value)
        if not math.isfinite(value):
            raise ValueError(f"non-finite RSS reading for AP {ap!r}")
        if value > 0.0:
            raise ValueError(f"RSS reading {value} dBm for AP {ap!r} is above 0 dBm")
        out[str(ap)] = max(value, RSS_FLOOR_DBM)
    return out


@dataclass(slots=True)
class RssScan:
    """A single timestamped WiFi scan, not yet tied to a graph node."""

    trajectory_index: int
    timestamp: float
    readings: dict[str, float]

    def __post_init__(self) -> None:
        self.readings = _clean_readings(self.readings)


@dataclass(slots=True)
class RssFingerprint:
    """RSS readings (AP id -> dBm) attached to a graph node."""

    node: NodeId
    readings: dict[str, float]
    timestamp: float = 0.0

    def __post_init__(self) -> None:
        self.node = NodeId(*self.node)
        self.readings = _clean_readings(self.readings)

    @property
    def is_empty(self) -> bool:
        return not self.readings


@dataclass(slots=True)
class PoseGraph:
    """Node estimates plus odometry and vicinity constraints.

    Estimates live in a contiguous ``(N, 3)`` array aligned with
    ``node_ids``; the optimizer mutates it in place and nothing else should.
    """

    node_ids: list[NodeId]
    estimates: np.ndarray
    odometry_edges: list = field(default_factory=list)
    vicinity_edges: list = field(default_factory=list)
    fixed_node: NodeId = NodeId(0, 1)
    _index: dict[NodeId, int] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self.node_ids = [NodeId(*n) for n in self.node_ids]
        self.estimates = np.array(self.estimates, dtype=float).reshape(-1, 3)
        if len(self.node_ids) != len(self.estimates):
            raise ValueError("node_ids and estimates differ in length")
        self._index = {}
        for i, node in enumerate(self.node_ids):
            if node in self._index:
                raise ValueError(f"duplicate node {node}")
            self._index[node] = i
        if not np.all(np.isfinite(self.estimates)):
            raise ValueError("node estimates must be finite")
        self.estimates[:, 2] = wrap_angles(self.estimates[:, 2])
        self.fixed_node = NodeId(*self.fixed_node)
        if self.fixed_node not in self._index:
            raise ValueError(f"fixed node {self.fixed_node} is not in the graph")
        if self.fixed_node.step_index != 1:
            raise ValueError("fixed node must be the first pose of a trajectory")
        for edge in self.odometry_edges:
            self._check_endpoint(edge.source, edge)
            self._check_endpoint(edge.target, edge)
            if edge.source.trajectory_index != edge.target.trajectory_index or (
                edge.target.step_index != edge.source.step_index + 1
            ):
                raise ValueError(f"odometry edge {edge.source}->{edge.target} does not join consecutive steps")
        for edge in self.vicinity_edges:
            self._check_endpoint(edge.a, edge)
            self._check_endpoint(edge.b, edge)

    def _check_endpoint(self, node: NodeId, edge: object) -> None:
        if node not in self._index:
            raise ValueError(f"edge {edge!r} references unknown node {node}")

    def __len__(self) -> int:
        return len(self.node_ids)

    def index(self, node: NodeId) -> int:
        return self._index[NodeId(*node)]

    def __contains__(self, node: object) -> bool:
        return node in self._index

    def pose(self, node: NodeId) -> Pose:
        return Pose.from_array(self.estimates[self.index(node)])

    @property
    def nodes(self) -> dict[NodeId, Pose]:
        return {n: Pose.from_array(p) for n, p in zip(self.node_ids, self.estimates)}

    @property
    def fixed_index(self) -> int:
        return self._index[self.fixed_node]

    def trajectory_indices(self) -> list[int]:
        return sorted({n.trajectory_index for n in self.node_ids})

    def trajectory_rows(self, trajectory_index: int) -> np.ndarray:
        """Row indices of one trajectory's nodes, ordered by step."""
        rows = [(n.step_index, i) for i, n in enumerate(self.node_ids) if n.trajectory_index == trajectory_index]
        rows.sort()
        return np.array([i for _, i in rows], dtype=int)

    def trajectory_poses(self, trajectory_index: int) -> np.ndarray:
        return self.estimates[self.trajectory_rows(trajectory_index)].copy()

    def copy(self) -> "PoseGraph":
        return PoseGraph(
            list(self.node_ids),
            self.estimates.copy(),
            list(self.odometry_edges),
            list(self.vicinity_edges),
            self.fixed_node,
        )
