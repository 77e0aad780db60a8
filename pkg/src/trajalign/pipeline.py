"""End-to-end alignment: associate scans, build the graph, optimize it."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

from trajalign.core import PoseGraph, RssFingerprint, RssScan, Trajectory
from trajalign.graph import BuildConfig, associate_fingerprints, build_graph
from trajalign.optimizer import SolveReport, SolverConfig, solve

logger = logging.getLogger(__name__)


@dataclass(slots=True)
class AlignmentResult:
    graph: PoseGraph
    fingerprints: list[RssFingerprint]
    report: SolveReport
    dropped_scans: int

    def aligned_trajectories(self, originals: Sequence[Trajectory]) -> list[Trajectory]:
        """Optimized poses with the original timestamps."""
        return [
            Trajectory.from_array(t.id, self.graph.trajectory_poses(t.id), t.timestamps)
            for t in sorted(originals, key=lambda t: t.id)
        ]


def associate_all(
    trajectories: Sequence[Trajectory], scans: Sequence[RssScan], slack_s: float = 2.0
) -> tuple[list[RssFingerprint], int]:
    known = {t.id for t in trajectories}
    fps: list[RssFingerprint] = []
    dropped = sum(1 for s in scans if s.trajectory_index not in known)
    for traj in trajectories:
        got, lost = associate_fingerprints(traj, scans, slack_s)
        fps.extend(got)
        dropped += lost
    return fps, dropped


def align(
    trajectories: Sequence[Trajectory],
    scans: Sequence[RssScan],
    build_config: BuildConfig | None = None,
    solver_config: SolverConfig | None = None,
) -> AlignmentResult:
    build_config = build_config or BuildConfig()
    fps, dropped = associate_all(trajectories, scans, build_config.association_slack_s)
    graph = build_graph(trajectories, fps, build_config)
    report = solve(graph, solver_config)
    return AlignmentResult(graph, fps, report, dropped)
