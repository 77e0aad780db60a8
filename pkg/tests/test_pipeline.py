import numpy as np
import pytest

from trajalign.core import RssScan, Trajectory
from trajalign.graph import BuildConfig
from trajalign.optimizer import SolverConfig
from trajalign.pipeline import align, associate_all
from trajalign.sim import evaluate_alignment, preset, simulate


def _walk(tid, n=5):
    arr = np.column_stack([np.arange(n, dtype=float), np.zeros(n), np.zeros(n)])
    return Trajectory.from_array(tid, arr, np.arange(n) * 0.5)


def test_associate_all_drops_unknown_and_unmatched_scans():
    trajs = [_walk(0), _walk(1)]
    scans = [RssScan(0, 0.5, {"a": -50.0}), RssScan(1, 1.0, {"a": -60.0}), RssScan(7, 0.5, {"a": -40.0}),
             RssScan(0, 99.0, {"a": -70.0})]
    fps, dropped = associate_all(trajs, scans, slack_s=2.0)
    assert dropped == 2
    assert sorted((f.node.trajectory_index, f.node.step_index) for f in fps if not f.is_empty) == [(0, 2), (1, 3)]


def test_aligned_trajectories_keep_timestamps_and_order():
    trajs = [_walk(3), _walk(1, 4)]
    res = align(trajs, [], BuildConfig(fixed_trajectory=3))
    out = res.aligned_trajectories(trajs)
    assert [t.id for t in out] == [1, 3]
    assert out[1].timestamps == trajs[0].timestamps
    np.testing.assert_allclose(out[1].as_array(), trajs[0].as_array(), atol=1e-12)
    assert res.report.final_cost == 0.0


def test_align_is_deterministic_on_a_small_scenario():
    ds = simulate(preset("dense-vs-sparse"))
    a = align(ds.raw, ds.scans)
    b = align(ds.raw, ds.scans)
    assert a.graph.estimates.tobytes() == b.graph.estimates.tobytes()
    assert a.report.to_text() == b.report.to_text()


@pytest.fixture(scope="module")
def corridor():
    return simulate(preset("corridor-12"))


def _corridor_metrics(ds, omega):
    cfg = BuildConfig(omega_wifi=omega, seeds={0: ds.reference_seed})
    res = align(ds.raw, ds.scans, cfg, SolverConfig(max_iterations=300))
    est = {i: res.graph.trajectory_poses(i) for i in res.graph.trajectory_indices()}
    return evaluate_alignment(est, ds.truth_by_id(), ds.landmarks, 0)


def test_vicinity_weight_sensitivity(corridor):
    """Heading alignment holds across weights; landmark accuracy degrades as the weight grows.

    Every vicinity edge pulls its endpoints together with constant force, so a
    large weight drags overlapping walks past the 2 m dead zone and shortens
    the corridor. Recorded values (seed 7): landmark mean 0.67 m at 0.05 and
    5.5 m at 1.0.
    """
    low = _corridor_metrics(corridor, 0.05)
    high = _corridor_metrics(corridor, 1.0)
    for m in (low, high):
        assert m.heading_stats[0] <= 2.5 and m.heading_stats[1] <= 1.5
    assert low.landmark_stats[0] <= 1.0
    assert high.landmark_stats[0] > 3.0 * low.landmark_stats[0]
