"""Align crowdsourced PDR trajectories with WiFi RSS vicinity constraints.

Trajectories become chains of pose-graph nodes linked by odometry edges;
nodes whose fingerprints are close in RSS space are linked by vicinity
edges; a sparse Levenberg-Marquardt solver finds the joint configuration.
"""

from trajalign.core import (
    BodyIncrement,
    NodeId,
    Pose,
    PoseGraph,
    RssFingerprint,
    RssScan,
    Trajectory,
    compose_pose,
    normalize_angle,
    relative_increment,
)
from trajalign.graph import BuildConfig, build_graph, total_cost
from trajalign.optimizer import SolveReport, SolverConfig, solve
from trajalign.pipeline import AlignmentResult, align
from trajalign.radiomap import RadioMap, build_radio_map, error_cdf, knn_localize

__version__ = "0.1.0"

__all__ = [
    "AlignmentResult", "BodyIncrement", "BuildConfig", "NodeId", "Pose", "PoseGraph", "RadioMap",
    "RssFingerprint", "RssScan", "SolveReport", "SolverConfig", "Trajectory", "align", "build_graph",
    "build_radio_map", "compose_pose", "error_cdf", "knn_localize", "normalize_angle",
    "relative_increment", "solve", "total_cost",
]
