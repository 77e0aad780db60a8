import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from trajalign.core import transform_poses
from trajalign.rss import rss_distance
from trajalign.sim import (
    PRESETS,
    AccessPoint,
    DriftModel,
    LandmarkVisit,
    Scenario,
    SimWorld,
    WalkSpec,
    anchor_at_truth_start,
    evaluate_alignment,
    preset,
    rigid_fit,
    sample_polyline,
    simulate,
    simulate_rss,
    simulate_walk,
)

from .oracles import wrap


def world(*aps, noise=0.0, seed=0):
    return SimWorld(list(aps), noise, rng_seed=seed)


# -- RSS model ------------------------------------------------------------------------

def test_simulate_rss_examples():
    w = world(AccessPoint("A", 0.0, 0.0, -30.0, 2.0))
    assert simulate_rss(w, (0.0, 0.0)).readings == {"A": -30.0}
    assert simulate_rss(w, (0.3, 0.4)).readings == {"A": -30.0}  # inside the 1 m clamp
    assert simulate_rss(w, (6.0, 8.0)).readings["A"] == pytest.approx(-50.0, abs=1e-12)
    assert simulate_rss(w, (1e6, 0.0)).readings == {}
    with pytest.raises(ValueError):
        simulate_rss(w, (math.nan, 0.0))


def test_world_validation():
    with pytest.raises(ValueError):
        AccessPoint("A", 0, 0, -30, 1.0)
    with pytest.raises(ValueError):
        world(AccessPoint("A", 0, 0), noise=-1.0)


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 200), st.floats(0, 200), st.floats(-45, -25), st.floats(1.5, 4.0))
def test_rss_distance_monotone_in_separation_single_ap(s1, s2, tx, n):
    w = world(AccessPoint("A", 0.0, 0.0, tx, n))
    near, far = sorted([s1, s2])
    base = simulate_rss(w, (0.0, 0.0)).readings
    a = simulate_rss(w, (near, 0.0)).readings
    b = simulate_rss(w, (far, 0.0)).readings
    # a reading dropped below the floor is refilled at the floor by the metric
    assert rss_distance(base, a or {"A": -110.0}) <= rss_distance(base, b or {"A": -110.0}) + 1e-12


def test_noise_is_seeded():
    aps = [AccessPoint(f"ap{i}", 3.0 * i, 1.0) for i in range(5)]
    a = [simulate_rss(world(*aps, noise=3.0, seed=9), (2.0, 2.0)).readings for _ in range(2)]
    assert a[0] == a[1]
    assert simulate_rss(world(*aps, noise=3.0, seed=10), (2.0, 2.0)).readings != a[0]


# -- walks ----------------------------------------------------------------------------

def test_sample_polyline():
    pts = sample_polyline([(0, 0), (3, 0), (3, 2)], 1.0)
    np.testing.assert_allclose(pts, [[0, 0], [1, 0], [2, 0], [3, 0], [3, 1], [3, 2]], atol=1e-12)
    with pytest.raises(ValueError):
        sample_polyline([(0, 0)], 1.0)
    with pytest.raises(ValueError):
        sample_polyline([(0, 0), (0.5, 0)], 1.0)


def test_noiseless_walk_is_truth_up_to_anchoring():
    w = world(AccessPoint("A", 5.0, 5.0))
    walk = simulate_walk(w, [(2, 1), (12, 1), (12, 9), (4, 9)], 0.5, DriftModel(initial_heading=0.7))
    assert walk.raw.poses[0].x == walk.raw.poses[0].y == walk.raw.poses[0].theta == 0.0
    truth = walk.truth.as_array()
    moved = anchor_at_truth_start(walk.raw, walk.truth)
    np.testing.assert_allclose(moved[:, :2], truth[:, :2], atol=1e-9)
    assert max(abs(wrap(a - b)) for a, b in zip(moved[:, 2], truth[:, 2])) < 1e-9
    assert len(walk.scans) == len(walk.truth) and walk.truth.poses[0].theta == pytest.approx(0.7)


def test_linear_heading_bias_accumulates():
    w = world(AccessPoint("A", 0.0, 0.0))
    walk = simulate_walk(w, [(0, 0), (1000, 0)], 1.0, DriftModel(heading_drift_rate=1e-3))
    assert len(walk.raw) == 1001
    raw_th = walk.raw.as_array()[:, 2]
    assert raw_th[-1] == pytest.approx(1.0, abs=1e-9)
    assert wrap(raw_th[-1] - walk.truth.poses[-1].theta) == pytest.approx(1.0, abs=1e-9)


def test_straight_walks_are_rotated_by_heading_differences():
    aps = [AccessPoint(f"ap{k}", 10.0 * k, 4.0) for k in range(6)]
    # step-length noise keeps the walks straight, so the rotation is exact
    walks = [WalkSpec([(0.0, 0.0), (50.0, 0.0)], 0.0, 0.0, 0.05) for _ in range(12)]
    ds = simulate(Scenario("straight", 5, aps, walks, noise_sigma_db=1.0))
    psi = [t.poses[0].theta for t in ds.truth]
    assert len(set(psi)) == 12
    raw = [t.as_array() for t in ds.raw]
    for i in range(12):
        for j in range(i + 1, 12):
            rot, _ = rigid_fit(raw[i], raw[j])
            assert abs(wrap(rot - (psi[i] - psi[j]))) < 1e-9


def test_simulate_is_seed_deterministic():
    a, b, c = simulate(preset("noiseless")), simulate(preset("noiseless")), simulate(preset("corridor-12", 8))
    d = simulate(preset("corridor-12", 8))
    assert [t.as_array().tobytes() for t in a.raw] == [t.as_array().tobytes() for t in b.raw]
    assert [s.readings for s in c.scans] == [s.readings for s in d.scans]
    assert c.query_positions.tobytes() == d.query_positions.tobytes()
    e = simulate(preset("corridor-12", 9))
    assert [t.as_array().tobytes() for t in e.raw] != [t.as_array().tobytes() for t in c.raw]


def test_presets_shape():
    assert set(PRESETS) == {"corridor-12", "campus-5", "dense-vs-sparse", "noiseless"}
    cor = preset("corridor-12")
    assert len(cor.walks) == 12 and len(cor.aps) == 8 and cor.noise_sigma_db == 3.0
    assert len(preset("campus-5").walks) == 5 and len(preset("campus-5").landmarks) == 4
    with pytest.raises(ValueError):
        preset("nope")


def test_scenario_round_trips_through_dict():
    for name in PRESETS:
        sc = preset(name)
        assert Scenario.from_dict(sc.to_dict()) == sc


# -- evaluation -----------------------------------------------------------------------

def _two_truths():
    a = np.column_stack([np.arange(10.0), np.zeros(10), np.zeros(10)])
    b = np.column_stack([np.zeros(8), np.arange(8.0), np.full(8, math.pi / 2)])
    return {0: a, 1: b}


def test_perfect_recovery_has_zero_metrics():
    truth = _two_truths()
    lm = [LandmarkVisit(0, 3, 2.0, 0.0), LandmarkVisit(1, 8, 0.0, 7.0)]
    m = evaluate_alignment({k: v.copy() for k, v in truth.items()}, truth, lm)
    assert m.heading_stats == pytest.approx((0, 0, 0), abs=1e-12)
    assert m.landmark_stats == pytest.approx((0, 0, 0), abs=1e-12)


def test_evaluation_is_invariant_to_a_global_rigid_motion():
    truth = _two_truths()
    moved = {k: transform_poses(v, (4.0, -2.0, 1.1)) for k, v in truth.items()}
    m = evaluate_alignment(moved, truth, [LandmarkVisit(1, 5, 0.0, 4.0)])
    assert m.heading_stats[2] < 1e-9 and m.landmark_stats[2] < 1e-9


def test_one_rotated_trajectory_averages_over_all():
    truth = _two_truths()
    truth[2] = np.column_stack([np.arange(6.0), np.full(6, 3.0), np.zeros(6)])
    est = {k: v.copy() for k, v in truth.items()}
    est[1] = transform_poses(truth[1], (0.0, 0.0, math.radians(5.0)))
    m = evaluate_alignment(est, truth)
    assert m.heading_errors_deg[1] == pytest.approx(5.0, abs=1e-9)
    assert m.heading_stats[0] == pytest.approx(5.0 / 3, abs=1e-9)


def test_evaluation_errors():
    truth = _two_truths()
    with pytest.raises(ValueError):
        evaluate_alignment({0: truth[0]}, truth)
    with pytest.raises(ValueError):
        evaluate_alignment({0: truth[0], 1: truth[1][:-1]}, truth)
    with pytest.raises(ValueError):
        evaluate_alignment(truth, truth, reference=5)


def test_landmark_visits_are_recorded_at_nearest_steps():
    ds = simulate(preset("campus-5"))
    assert ds.landmarks
    truth = ds.truth_by_id()
    for v in ds.landmarks:
        x, y = truth[v.trajectory_index][v.step_index - 1, :2]
        assert (x, y) == (v.x, v.y)
        assert min(math.hypot(x - lx, y - ly) for lx, ly in ds.scenario.landmarks) <= ds.scenario.step_length
