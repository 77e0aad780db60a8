import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings, strategies as st

from trajalign import io
from trajalign.core import RssScan, Trajectory
from trajalign.graph import BuildConfig
from trajalign.radiomap import RadioMap, RadioMapEntry, error_cdf
from trajalign.sim import LandmarkVisit

# six-decimal values survive the text formats bit for bit
six = st.floats(-1e4, 1e4, allow_nan=False).map(lambda v: round(v, 6) + 0.0)
angle6 = st.floats(-3.141592, 3.141592).map(lambda v: round(v, 6) + 0.0)
rss6 = st.floats(-110, 0).map(lambda v: round(v, 6) + 0.0)
ap_ids = st.sampled_from(["ap1", "ap2", "00:1a:2b:3c:4d:5e", "aa:bb:cc:dd:ee:ff", "x"])
tmp_settings = settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])


def _traj(tid, rows, t0=0.0):
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    return Trajectory.from_array(tid, arr, t0 + 0.5 * np.arange(len(arr)))


@tmp_settings
@given(st.lists(st.lists(st.tuples(six, six, angle6), min_size=2, max_size=6), min_size=1, max_size=3))
def test_trajectory_round_trip(tmp_path, batches):
    trajs = [_traj(i, rows, round(1.25 * i, 6)) for i, rows in enumerate(batches)]
    path = tmp_path / "t.traj"
    io.write_trajectories(path, trajs)
    assert io.read_trajectories(path) == trajs
    first = path.read_bytes()
    io.write_trajectories(path, io.read_trajectories(path))
    assert path.read_bytes() == first


@tmp_settings
@given(st.lists(st.tuples(st.integers(0, 3), st.dictionaries(ap_ids, rss6, max_size=4)), max_size=8))
def test_scan_round_trip(tmp_path, items):
    scans = [RssScan(tid, float(k), r) for k, (tid, r) in enumerate(items) if r]
    path = tmp_path / "s.log"
    io.write_scans(path, scans)
    log = io.read_scans(path)
    assert log.scans == scans and log.clamped == 0


@tmp_settings
@given(st.lists(st.tuples(six, six, st.integers(1, 50), st.dictionaries(ap_ids, st.tuples(rss6, st.integers(1, 9)))),
                max_size=6), st.sampled_from([0.5, 1.0, 2.0]))
def test_radio_map_round_trip(tmp_path, items, grid):
    rm = RadioMap([RadioMapEntry((x, y), {a: v for a, (v, _) in c.items()}, {a: n for a, (_, n) in c.items()}, ns)
                   for x, y, ns, c in items], grid)
    path = tmp_path / "rm.txt"
    io.write_radio_map(path, rm)
    assert io.read_radio_map(path) == rm


def test_radio_map_header_and_bssid_cells(tmp_path):
    rm = RadioMap([RadioMapEntry((0.5, 1.5), {"00:1a:2b:3c:4d:5e": -61.25}, {"00:1a:2b:3c:4d:5e": 3}, 3)], 1.0)
    path = tmp_path / "rm.txt"
    io.write_radio_map(path, rm)
    assert path.read_text().splitlines() == [
        "# radiomap grid_size=1.000000 version=1",
        "0.500000 1.500000 3 00:1a:2b:3c:4d:5e:-61.250000:3",
    ]
    io.write_radio_map(path, RadioMap([], 2.0))
    assert path.read_text() == "# radiomap grid_size=2.000000 version=1\n"
    assert io.read_radio_map(path) == RadioMap([], 2.0)


def test_positions_landmarks_cdf_round_trip(tmp_path):
    recs = [io.PositionRecord(0, 0.0, 1.5, -2.25), io.PositionRecord(7, 3.5, 0.0, 10.0)]
    io.write_positions(tmp_path / "p.txt", recs)
    assert io.read_positions(tmp_path / "p.txt") == recs
    visits = [LandmarkVisit(0, 4, 60.0, 0.0), LandmarkVisit(2, 11, 0.5, 40.25)]
    io.write_landmarks(tmp_path / "l.txt", visits)
    assert io.read_landmarks(tmp_path / "l.txt") == visits
    rep = error_cdf([((e, 0.0), (0.0, 0.0)) for e in (1, 3, 5, 20)])
    io.write_cdf(tmp_path / "c.txt", rep)
    np.testing.assert_array_equal(io.read_cdf(tmp_path / "c.txt"), [[1, 0.25], [3, 0.5], [5, 0.75], [20, 1]])


def test_negative_zero_is_written_as_zero(tmp_path):
    assert io.fmt(-0.0) == "0.000000" and io.fmt(-1e-9) == "0.000000" and io.fmt(-0.5) == "-0.500000"


# -- parse errors -----------------------------------------------------------------------

@pytest.mark.parametrize("body, line, needle", [
    ("0 1 0.0 0 0 0\n0 1 0.5 1 0 0\n", 2, "expected step 2"),
    ("0 1 0.0 0 0 0\n0 2 0.0 1 0 0\n", 2, "not increasing"),
    ("# header\n\n0 1 0.0 0 0\n", 3, "expected 6 fields"),
    ("0 1 0.0 0 0 0\n0 2 0.5 abc 0 0\n", 2, "bad x"),
    ("0 1 0.0 0 0 0\n0 2 0.5 nan 0 0\n", 2, "non-finite x"),
    ("-1 1 0.0 0 0 0\n", 1, "negative"),
])
def test_trajectory_parse_errors_name_file_and_line(tmp_path, body, line, needle):
    path = tmp_path / "bad.traj"
    path.write_text(body)
    with pytest.raises(io.ParseError, match=needle) as info:
        io.read_trajectories(path)
    assert str(info.value).startswith(f"{path}:{line}: ")
    assert info.value.line == line


def test_single_pose_trajectory_rejected(tmp_path):
    path = tmp_path / "one.traj"
    path.write_text("3 1 0.0 0 0 0\n")
    with pytest.raises(io.ParseError, match="fewer than 2"):
        io.read_trajectories(path)


def test_scan_clamping_and_errors(tmp_path):
    path = tmp_path / "s.log"
    path.write_text("0 1.0 a -120\n0 1.0 b 5\n0 1.0 c -60\n1 2.0 a -70\n")
    log = io.read_scans(path)
    assert log.clamped == 2
    assert log.scans == [RssScan(0, 1.0, {"a": -110.0, "b": 0.0, "c": -60.0}), RssScan(1, 2.0, {"a": -70.0})]
    path.write_text("0 1.0 a -60\n0 1.0 a -61\n")
    with pytest.raises(io.ParseError, match=r":2: duplicate AP"):
        io.read_scans(path)
    path.write_text("0 1.0 a\n")
    with pytest.raises(io.ParseError, match=r":1: expected 4 fields"):
        io.read_scans(path)


def test_radio_map_parse_errors(tmp_path):
    path = tmp_path / "rm.txt"
    path.write_text("0 0 1 a:-50:1\n")
    with pytest.raises(io.ParseError, match=r":1: missing"):
        io.read_radio_map(path)
    path.write_text("# radiomap grid_size=1.0 version=2\n")
    with pytest.raises(io.ParseError, match="version"):
        io.read_radio_map(path)
    path.write_text("# radiomap grid_size=1.0 version=1\n0 0 1 a:-50:1\n0 0 1 a-50\n")
    with pytest.raises(io.ParseError, match=r":3: bad cell"):
        io.read_radio_map(path)


def test_writers_reject_whitespace_identifiers(tmp_path):
    with pytest.raises(ValueError):
        io.write_scans(tmp_path / "s.log", [RssScan(0, 0.0, {"my ap": -50.0})])


# -- configuration ----------------------------------------------------------------------

def test_config_defaults_and_round_trip(tmp_path):
    assert io.load_config(None) == io.PipelineConfig()
    cfg = io.PipelineConfig.from_dict({"omega_wifi": 0.05, "max_iter": 300, "seeds": {"2": [1.0, 2.0, 0.5]},
                                       "grid_size": 2.0, "k": 5, "algorithm": "gauss_newton"})
    assert cfg.build.omega_wifi == 0.05 and cfg.build.seeds == {2: (1.0, 2.0, 0.5)}
    assert cfg.solver.max_iterations == 300 and cfg.solver.algorithm == "gauss_newton"
    assert (cfg.grid_size, cfg.k) == (2.0, 5)
    io.save_json(tmp_path / "c.json", cfg.to_dict())
    assert io.load_config(tmp_path / "c.json") == cfg
    assert io.PipelineConfig.from_dict(io.PipelineConfig().to_dict()).build == BuildConfig()


def test_config_errors(tmp_path):
    with pytest.raises(ValueError, match="unknown config keys"):
        io.PipelineConfig.from_dict({"omega": 1.0})
    with pytest.raises(ValueError):
        io.PipelineConfig.from_dict({"mu": -1.0})
    path = tmp_path / "c.json"
    path.write_text('{\n  "mu": 1.0,\n  oops\n}')
    with pytest.raises(io.ParseError) as info:
        io.load_config(path)
    assert info.value.line == 3
    path.write_text(json.dumps([1, 2]))
    with pytest.raises(io.ParseError):
        io.load_config(path)
