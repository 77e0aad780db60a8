"""Synthetic worlds: ground-truth walks, drifting PDR copies, and RSS scans.

All randomness is drawn from one ``numpy.random.Generator`` (PCG64) seeded by
the scenario seed, so a seed pins the dataset bit for bit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from trajalign.core import (
    RSS_FLOOR_DBM,
    BodyIncrement,
    NodeId,
    Pose,
    RssFingerprint,
    RssScan,
    Trajectory,
    compose_pose,
    relative_increment,
    transform_poses,
    wrap_angles,
)


@dataclass(frozen=True, slots=True)
class AccessPoint:
    ap_id: str
    x: float
    y: float
    tx_power_dbm: float = -30.0
    path_loss_exponent: float = 2.0

    def __post_init__(self) -> None:
        if not 1.5 <= self.path_loss_exponent <= 4.0:
            raise ValueError(f"path loss exponent {self.path_loss_exponent} outside [1.5, 4.0]")


@dataclass(slots=True)
class SimWorld:
    aps: list[AccessPoint]
    noise_sigma_db: float = 0.0
    rss_floor: float = RSS_FLOOR_DBM
    rng_seed: int = 0
    rng: np.random.Generator = field(init=False, repr=False)
    _ap_xy: np.ndarray = field(init=False, repr=False)
    _tx: np.ndarray = field(init=False, repr=False)
    _n: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.noise_sigma_db < 0:
            raise ValueError("noise_sigma_db must be non-negative")
        self.rng = np.random.default_rng(self.rng_seed)
        self._ap_xy = np.array([[ap.x, ap.y] for ap in self.aps], dtype=float).reshape(-1, 2)
        self._tx = np.array([ap.tx_power_dbm for ap in self.aps], dtype=float)
        self._n = np.array([ap.path_loss_exponent for ap in self.aps], dtype=float)

    def mean_rss(self, position: Sequence[float]) -> np.ndarray:
        """Noise-free log-distance RSS of every AP at ``position``."""
        dist = np.hypot(self._ap_xy[:, 0] - position[0], self._ap_xy[:, 1] - position[1])
        return self._tx - 10.0 * self._n * np.log10(np.maximum(dist, 1.0))


def _simulated_readings(world: SimWorld, position: Sequence[float]) -> dict[str, float]:
    if not all(math.isfinite(v) for v in position[:2]):
        raise ValueError("position must be finite")
    rss = world.mean_rss(position)
    if world.noise_sigma_db > 0:
        rss = rss + world.rng.normal(0.0, world.noise_sigma_db, size=rss.shape)
    return {
        ap.ap_id: float(min(v, 0.0))
        for ap, v in zip(world.aps, rss)
        if v >= world.rss_floor
    }


def simulate_rss(
    world: SimWorld, position: Sequence[float], node: NodeId = NodeId(0, 1), timestamp: float = 0.0
) -> RssFingerprint:
    """One scan at ``position``; sub-floor readings are dropped as undetected."""
    return RssFingerprint(node, _simulated_readings(world, position), timestamp)


@dataclass(slots=True)
class DriftModel:
    """PDR corruption: per-step heading bias and noise, step-length noise.

    ``initial_heading`` is the true world heading of the first pose; the
    raw PDR copy always starts at ``(0, 0, 0)``.
    """

    heading_drift_rate: float = 0.0
    heading_noise_sigma: float = 0.0
    step_length_noise_sigma: float = 0.0
    initial_heading: float = 0.0


@dataclass(slots=True)
class Walk:
    truth: Trajectory
    raw: Trajectory
    scans: list[RssScan]


def sample_polyline(waypoints: Sequence[Sequence[float]], step_length: float) -> np.ndarray:
    """Points every ``step_length`` meters of arc length along the polyline."""
    pts = np.asarray(waypoints, dtype=float)
    if pts.ndim != 2 or len(pts) < 2 or step_length <= 0:
        raise ValueError("need at least 2 waypoints and a positive step length")
    seg = np.diff(pts, axis=0)
    seg_len = np.hypot(seg[:, 0], seg[:, 1])
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    n_steps = int(math.floor(cum[-1] / step_length + 1e-9))
    if n_steps < 1:
        raise ValueError("polyline shorter than one step")
    s = np.arange(n_steps + 1) * step_length
    return np.column_stack([np.interp(s, cum, pts[:, 0]), np.interp(s, cum, pts[:, 1])])


def simulate_walk(
    world: SimWorld,
    true_path: Sequence[Sequence[float]],
    step_length: float,
    drift: DriftModel,
    trajectory_index: int = 0,
    start_time: float = 0.0,
    step_period: float = 0.5,
) -> Walk:
    """Walk a polyline: ground truth, the drifting PDR estimate, and one scan per step.

    The true heading at each step is the walking direction offset so that the
    first pose heads ``drift.initial_heading``. PDR increments are the true
    body-frame increments with step-length noise and heading bias plus noise.
    """
    xy = sample_polyline(true_path, step_length)
    fwd = np.diff(xy, axis=0)
    direction = np.arctan2(fwd[:, 1], fwd[:, 0])
    direction = np.concatenate([direction, direction[-1:]])
    heading = np.unwrap(direction) - direction[0] + drift.initial_heading
    truth_arr = np.column_stack([xy, wrap_angles(heading)])
    times = start_time + step_period * np.arange(len(xy))
    truth = Trajectory.from_array(trajectory_index, truth_arr, times)

    rng = world.rng
    raw = [Pose(0.0, 0.0, 0.0)]
    for k in range(len(xy) - 1):
        dx, dy, dth = relative_increment(truth.poses[k], truth.poses[k + 1])
        length = math.hypot(dx, dy)
        if drift.step_length_noise_sigma > 0 and length > 0:
            scale = max(length + rng.normal(0.0, drift.step_length_noise_sigma), 0.0) / length
            dx, dy = dx * scale, dy * scale
        dth += drift.heading_drift_rate
        if drift.heading_noise_sigma > 0:
            dth += rng.normal(0.0, drift.heading_noise_sigma)
        raw.append(compose_pose(raw[-1], BodyIncrement(dx, dy, dth)))
    raw_traj = Trajectory(trajectory_index, raw, list(times))

    scans = [RssScan(trajectory_index, float(t), _simulated_readings(world, p)) for t, p in zip(times, xy)]
    return Walk(truth, raw_traj, scans)


# -- evaluation ---------------------------------------------------------------

def rigid_fit(src: np.ndarray, dst: np.ndarray) -> tuple[float, np.ndarray]:
    """Least-squares rotation angle and translation mapping ``src`` points onto ``dst``."""
    src = np.asarray(src, dtype=float)[:, :2]
    dst = np.asarray(dst, dtype=float)[:, :2]
    cs, cd = src.mean(axis=0), dst.mean(axis=0)
    a, b = src - cs, dst - cd
    angle = math.atan2(float(np.sum(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])), float(np.sum(a * b)))
    c, s = math.cos(angle), math.sin(angle)
    t = cd - np.array([c * cs[0] - s * cs[1], s * cs[0] + c * cs[1]])
    return angle, t


def reference_frame_fit(
    estimated: Mapping[int, np.ndarray], truth: Mapping[int, np.ndarray], reference: int = 0
) -> tuple[float, float, float]:
    """``(tx, ty, rotation)`` moving the estimated reference trajectory onto its truth."""
    if reference not in truth or reference not in estimated:
        raise ValueError(f"reference trajectory {reference} missing")
    angle, t = rigid_fit(estimated[reference], truth[reference])
    return (float(t[0]), float(t[1]), angle)


@dataclass(frozen=True, slots=True)
class LandmarkVisit:
    trajectory_index: int
    step_index: int
    x: float
    y: float


@dataclass(slots=True)
class AlignmentMetrics:
    heading_errors_deg: dict[int, float]
    landmark_errors_m: list[float]

    @staticmethod
    def _stats(values: Sequence[float]) -> tuple[float, float, float]:
        if not len(values):
            return (math.nan, math.nan, math.nan)
        v = np.asarray(values, dtype=float)
        return float(v.mean()), float(v.std()), float(v.max())

    @property
    def heading_stats(self) -> tuple[float, float, float]:
        """Mean, (population) std and max heading error in degrees."""
        return self._stats(list(self.heading_errors_deg.values()))

    @property
    def landmark_stats(self) -> tuple[float, float, float]:
        return self._stats(self.landmark_errors_m)

    def to_dict(self) -> dict[str, Any]:
        hm, hs, hx = self.heading_stats
        lm, ls, lx = self.landmark_stats
        return {
            "heading_mean_deg": hm, "heading_std_deg": hs, "heading_max_deg": hx,
            "landmark_mean_m": lm, "landmark_std_m": ls, "landmark_max_m": lx,
            "n_trajectories": len(self.heading_errors_deg), "n_landmarks": len(self.landmark_errors_m),
        }


def evaluate_alignment(
    estimated: Mapping[int, np.ndarray],
    truth: Mapping[int, np.ndarray],
    landmarks: Sequence[LandmarkVisit] = (),
    reference: int = 0,
) -> AlignmentMetrics:
    """Heading and landmark errors of estimated trajectories against truth.

    The whole estimate is first moved by the rigid transform that best fits
    the reference trajectory onto its truth. Each trajectory's heading error
    is then the rotation of its own best rigid fit onto its truth; landmark
    errors are planar distances at the visit steps.
    """
    if set(estimated) != set(truth):
        raise ValueError(f"trajectory sets differ: {sorted(estimated)} vs {sorted(truth)}")
    for i in truth:
        if len(estimated[i]) != len(truth[i]):
            raise ValueError(f"trajectory {i}: {len(estimated[i])} estimated vs {len(truth[i])} true poses")
    frame = reference_frame_fit(estimated, truth, reference)
    moved = {i: transform_poses(np.asarray(est, dtype=float), frame) for i, est in estimated.items()}
    heading = {}
    for i in sorted(truth):
        rot, _ = rigid_fit(moved[i], truth[i])
        heading[i] = abs(math.degrees(rot))
    errors = [
        float(math.hypot(moved[v.trajectory_index][v.step_index - 1, 0] - v.x,
                         moved[v.trajectory_index][v.step_index - 1, 1] - v.y))
        for v in landmarks
    ]
    return AlignmentMetrics(heading, errors)


def anchor_at_truth_start(raw: Trajectory, truth: Trajectory) -> np.ndarray:
    """Raw PDR poses placed in the world frame by the true first pose (drift-only error)."""
    p0 = truth.poses[0]
    return transform_poses(raw.as_array(), (p0.x, p0.y, p0.theta))


# -- scenarios ----------------------------------------------------------------

@dataclass(slots=True)
class WalkSpec:
    waypoints: list[tuple[float, float]]
    heading_drift_rate: float = 0.0
    heading_noise_sigma: float = 0.0
    step_length_noise_sigma: float = 0.0
    initial_heading: float | None = None


@dataclass(slots=True)
class Scenario:
    """Everything needed to regenerate a dataset; serializable to JSON.

    A walk whose ``initial_heading`` is ``None`` draws it uniformly from
    ``heading_range`` (radians) with the scenario generator.
    """

    name: str
    seed: int
    aps: list[AccessPoint]
    walks: list[WalkSpec]
    noise_sigma_db: float = 3.0
    step_length: float = 0.7
    step_period: float = 0.5
    landmarks: list[tuple[float, float]] = field(default_factory=list)
    reference: int = 0
    heading_range: tuple[float, float] = (0.0, 2.0 * math.pi)
    n_queries: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "seed": self.seed,
            "noise_sigma_db": self.noise_sigma_db,
            "step_length": self.step_length,
            "step_period": self.step_period,
            "reference": self.reference,
            "heading_range": list(self.heading_range),
            "n_queries": self.n_queries,
            "landmarks": [list(p) for p in self.landmarks],
            "aps": [
                {"id": ap.ap_id, "x": ap.x, "y": ap.y, "tx_power_dbm": ap.tx_power_dbm,
                 "path_loss_exponent": ap.path_loss_exponent}
                for ap in self.aps
            ],
            "walks": [
                {"waypoints": [list(p) for p in w.waypoints], "heading_drift_rate": w.heading_drift_rate,
                 "heading_noise_sigma": w.heading_noise_sigma,
                 "step_length_noise_sigma": w.step_length_noise_sigma, "initial_heading": w.initial_heading}
                for w in self.walks
            ],
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "Scenario":
        return cls(
            name=str(data.get("name", "custom")),
            seed=int(data.get("seed", 0)),
            aps=[
                AccessPoint(str(a["id"]), float(a["x"]), float(a["y"]), float(a.get("tx_power_dbm", -30.0)),
                            float(a.get("path_loss_exponent", 2.0)))
                for a in data["aps"]
            ],
            walks=[
                WalkSpec(
                    [tuple(map(float, p)) for p in w["waypoints"]],
                    float(w.get("heading_drift_rate", 0.0)),
                    float(w.get("heading_noise_sigma", 0.0)),
                    float(w.get("step_length_noise_sigma", 0.0)),
                    None if w.get("initial_heading") is None else float(w["initial_heading"]),
                )
                for w in data["walks"]
            ],
            noise_sigma_db=float(data.get("noise_sigma_db", 3.0)),
            step_length=float(data.get("step_length", 0.7)),
            step_period=float(data.get("step_period", 0.5)),
            landmarks=[tuple(map(float, p)) for p in data.get("landmarks", [])],
            reference=int(data.get("reference", 0)),
            heading_range=tuple(map(float, data.get("heading_range", (0.0, 2.0 * math.pi)))),
            n_queries=int(data.get("n_queries", 0)),
        )


@dataclass(slots=True)
class SimDataset:
    scenario: Scenario
    truth: list[Trajectory]
    raw: list[Trajectory]
    scans: list[RssScan]
    landmarks: list[LandmarkVisit]
    queries: list[RssScan]
    query_positions: np.ndarray

    @property
    def reference_seed(self) -> tuple[float, float, float]:
        """True first pose of the reference walk, used to seed its initial guess."""
        p = self.truth[self.scenario.reference].poses[0]
        return (p.x, p.y, p.theta)

    def truth_by_id(self) -> dict[int, np.ndarray]:
        return {t.id: t.as_array() for t in self.truth}


def _landmark_visits(truth: Trajectory, landmarks: Sequence[tuple[float, float]], radius: float) -> list[LandmarkVisit]:
    xy = truth.as_array()[:, :2]
    visits = []
    for lx, ly in landmarks:
        d = np.hypot(xy[:, 0] - lx, xy[:, 1] - ly)
        near = d <= radius
        k = 0
        while k < len(d):
            if not near[k]:
                k += 1
                continue
            end = k
            while end + 1 < len(d) and near[end + 1]:
                end += 1
            best = k + int(np.argmin(d[k:end + 1]))
            visits.append(LandmarkVisit(truth.id, best + 1, float(xy[best, 0]), float(xy[best, 1])))
            k = end + 1
    visits.sort(key=lambda v: (v.trajectory_index, v.step_index))
    return visits


def simulate(scenario: Scenario) -> SimDataset:
    """Generate a full dataset from a scenario."""
    world = SimWorld(list(scenario.aps), scenario.noise_sigma_db, RSS_FLOOR_DBM, scenario.seed)
    rng = world.rng
    truth, raw, scans, visits = [], [], [], []
    lo, hi = scenario.heading_range
    for i, spec in enumerate(scenario.walks):
        psi = float(rng.uniform(lo, hi)) if spec.initial_heading is None else spec.initial_heading
        drift = DriftModel(spec.heading_drift_rate, spec.heading_noise_sigma, spec.step_length_noise_sigma, psi)
        walk = simulate_walk(world, spec.waypoints, scenario.step_length, drift, i, 0.0, scenario.step_period)
        truth.append(walk.truth)
        raw.append(walk.raw)
        scans.extend(walk.scans)
        visits.extend(_landmark_visits(walk.truth, scenario.landmarks, scenario.step_length))

    queries, qpos = [], []
    if scenario.n_queries:
        paths = [sample_polyline(w.waypoints, 0.1) for w in scenario.walks]
        for q in range(scenario.n_queries):
            path = paths[int(rng.integers(len(paths)))]
            p = path[int(rng.integers(len(path)))]
            qpos.append(p)
            queries.append(RssScan(0, float(q), _simulated_readings(world, p)))
    return SimDataset(scenario, truth, raw, scans, visits, queries, np.array(qpos, dtype=float).reshape(-1, 2))


def _random_aps(rng: np.random.Generator, n: int, box: tuple[float, float, float, float],
                tx: tuple[float, float] = (-40.0, -30.0), expo: tuple[float, float] = (2.0, 3.5),
                prefix: str = "ap") -> list[AccessPoint]:
    x0, x1, y0, y1 = box
    return [
        AccessPoint(
            f"{prefix}{k:02d}",
            round(float(rng.uniform(x0, x1)), 3),
            round(float(rng.uniform(y0, y1)), 3),
            round(float(rng.uniform(*tx)), 3),
            round(float(rng.uniform(*expo)), 3),
        )
        for k in range(n)
    ]


def corridor_12(seed: int = 7) -> Scenario:
    """Twelve walks along one straight 90 m corridor with unknown initial headings."""
    rng = np.random.default_rng(seed)
    aps = [
        AccessPoint(
            f"ap{k:02d}", round(6.0 + 11.0 * k, 3), 6.0 if k % 2 else -6.0,
            round(float(rng.uniform(-38.0, -30.0)), 3), round(float(rng.uniform(2.0, 3.5)), 3),
        )
        for k in range(8)
    ]
    walks = []
    for _ in range(12):
        off = round(float(rng.uniform(-0.4, 0.4)), 3)
        walks.append(WalkSpec(
            [(0.0, 0.0), (2.0, off), (90.0, off)],
            heading_drift_rate=round(float(rng.uniform(-3e-4, 3e-4)), 6),
            heading_noise_sigma=2e-3,
            step_length_noise_sigma=0.02,
        ))
    walks[0].initial_heading = 0.0
    return Scenario("corridor-12", seed, aps, walks, noise_sigma_db=3.0, step_length=0.75,
                    landmarks=[(30.0, 0.0), (60.0, 0.0), (88.0, 0.0)], n_queries=200)


_CAMPUS_ROUTES = [
    # outer ring of a 60 x 40 m block, twice
    [(0, 0), (60, 0), (60, 40), (0, 40), (0, 0), (60, 0), (60, 40), (0, 40), (0, 0)],
    # left loop twice, then right loop
    [(0, 0), (30, 0), (30, 40), (0, 40), (0, 0), (30, 0), (30, 40), (0, 40), (0, 20), (60, 20),
     (60, 0), (30, 0), (30, 20)],
    # figure eight through the centre
    [(0, 0), (0, 20), (60, 20), (60, 40), (30, 40), (30, 0), (0, 0), (0, 40), (30, 40), (30, 0),
     (60, 0), (60, 20), (0, 20)],
    # outer ring counter-clockwise, then the cross corridors
    [(0, 0), (0, 40), (60, 40), (60, 0), (0, 0), (0, 20), (60, 20), (60, 40), (30, 40), (30, 0)],
    # lower half twice, then upper half
    [(0, 0), (60, 0), (60, 20), (0, 20), (0, 0), (60, 0), (60, 20), (0, 20), (0, 40), (60, 40),
     (60, 20)],
]


def campus_5(seed: int = 11) -> Scenario:
    """Five long walks over a block of crossing corridors with four landmarks."""
    rng = np.random.default_rng(seed)
    aps = _random_aps(rng, 30, (-5.0, 65.0, -5.0, 45.0))
    walks = []
    for route in _CAMPUS_ROUTES:
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
        # walkers do not share one centre line
        ox, oy = (round(float(v), 3) for v in rng.uniform(-0.5, 0.5, size=2))
        walks.append(WalkSpec(
            [(float(x) + ox, float(y) + oy) for x, y in route],
            heading_drift_rate=round(sign * float(rng.uniform(2.5e-3, 4e-3)), 6),
            heading_noise_sigma=3e-3,
            step_length_noise_sigma=0.03,
        ))
    walks[0].initial_heading = 0.0
    return Scenario("campus-5", seed, aps, walks, noise_sigma_db=3.0, step_length=0.7,
                    landmarks=[(60.0, 0.0), (60.0, 40.0), (0.0, 40.0), (30.0, 20.0)], n_queries=300)


def dense_vs_sparse(seed: int = 3) -> Scenario:
    """One corridor whose first half is AP-dense and second half AP-sparse."""
    rng = np.random.default_rng(seed)
    aps = _random_aps(rng, 24, (0.0, 50.0, -8.0, 8.0), prefix="dense") + \
        _random_aps(rng, 4, (50.0, 100.0, -8.0, 8.0), prefix="sparse")
    walks = [WalkSpec([(0.0, 0.0), (100.0, 0.0)], initial_heading=0.0)]
    return Scenario("dense-vs-sparse", seed, aps, walks, noise_sigma_db=2.0, step_length=0.7)


def noiseless(seed: int = 1) -> Scenario:
    """Noise-free, drift-free walks whose PDR frame coincides with the world frame."""
    rng = np.random.default_rng(seed)
    aps = _random_aps(rng, 12, (-5.0, 45.0, -5.0, 25.0))
    route = [(0.0, 0.0), (40.0, 0.0), (40.0, 20.0)]
    walks = [WalkSpec(route, initial_heading=0.0) for _ in range(3)]
    return Scenario("noiseless", seed, aps, walks, noise_sigma_db=0.0, step_length=0.5)


PRESETS = {
    "corridor-12": corridor_12,
    "campus-5": campus_5,
    "dense-vs-sparse": dense_vs_sparse,
    "noiseless": noiseless,
}


def preset(name: str, seed: int | None = None) -> Scenario:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown scenario {name!r}; choose from {sorted(PRESETS)}") from None
    return factory() if seed is None else factory(seed)
