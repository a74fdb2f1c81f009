import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aovsim.mobility import TrajectoryError, ingest_csv, predict, project, resample, synthesize, write_csv
from oracles import haversine


def _csv(tmp_path, text):
    p = tmp_path / "traj.csv"
    p.write_text(text)
    return p


def test_linear_resample(tmp_path):
    p = _csv(tmp_path, "vehicle_id,t,x,y\n0,0,0,0\n0,10,100,0\n")
    (tr,) = ingest_csv(p, 11, 1.0)
    assert np.allclose(tr[:, 0], np.arange(0, 101, 10))


def test_projection_against_haversine():
    for lat in (30.0, 45.0, 60.0):
        dlon = 1000.0 / (6371008.8 * np.cos(np.radians(lat)) * np.pi / 180)
        xy = project(np.array([104.0, 104.0 + dlon]), np.array([lat, lat]), (104.0, lat))
        d = np.hypot(*(xy[1] - xy[0]))
        assert d == pytest.approx(haversine(104.0, lat, 104.0 + dlon, lat), rel=5e-3)


def test_lonlat_ingest(tmp_path):
    p = _csv(tmp_path, "vehicle_id,timestamp,lon,lat\n1,100,104.0,30.0\n1,110,104.01,30.0\n")
    (tr,) = ingest_csv(p, 11, 1.0, projection_origin=(104.0, 30.0))
    assert tr[-1, 0] == pytest.approx(haversine(104.0, 30.0, 104.01, 30.0), rel=5e-3)


def test_duplicate_timestamp_reports_line(tmp_path):
    p = _csv(tmp_path, "vehicle_id,t,x,y\n0,0,0,0\n0,0,1,1\n")
    with pytest.raises(TrajectoryError, match="line 3"):
        ingest_csv(p, 5, 1.0)


def test_malformed_row_and_empty_file(tmp_path):
    with pytest.raises(TrajectoryError, match="line 2"):
        ingest_csv(_csv(tmp_path, "vehicle_id,t,x,y\n0,zero,0,0\n"), 5, 1.0)
    with pytest.raises(TrajectoryError, match="empty"):
        ingest_csv(_csv(tmp_path, ""), 5, 1.0)


def test_gap_split_and_drop(tmp_path):
    text = "vehicle_id,t,x,y\n0,0,0,0\n0,2,2,0\n0,50,50,0\n0,52,52,0\n"
    assert len(ingest_csv(_csv(tmp_path, text), 60, 1.0, max_gap=30)) == 2
    with pytest.raises(TrajectoryError):
        ingest_csv(_csv(tmp_path, text), 60, 1.0, max_gap=30, gap_policy="drop")


def test_csv_roundtrip(tmp_path):
    traces = synthesize(3, (500, 500), (5, 10), 20, 1.0, np.random.default_rng(0))
    write_csv(tmp_path / "t.csv", traces, 1.0)
    back = ingest_csv(tmp_path / "t.csv", 20, 1.0)
    assert np.allclose(np.array(back), np.array(traces))


def test_synthesize_bounds_and_determinism():
    a = synthesize(5, (3000, 3000), (5, 15), 300, 1.0, np.random.default_rng(1))
    b = synthesize(5, (3000, 3000), (5, 15), 300, 1.0, np.random.default_rng(1))
    assert np.array_equal(np.array(a), np.array(b))
    arr = np.array(a)
    assert arr.min() >= 0 and arr.max() <= 3000
    still = synthesize(2, (100, 100), (0, 0), 10, 1.0, np.random.default_rng(2))
    assert all(np.ptp(t, axis=0).max() == 0 for t in still)


def test_predict_examples():
    pr = predict([(0, 0), (1, 0)], 3, (0, 0))
    assert np.allclose(pr.predicted_positions, [(2, 0), (3, 0), (4, 0)])
    assert pr.mean_predicted_distance == pytest.approx(3.0)
    st_ = predict([(5, 0), (5, 0)], 4, (0, 0))
    assert st_.mean_predicted_distance == pytest.approx(5.0)
    one = predict([(3, 4)], 2, (0, 0))
    assert np.allclose(one.predicted_positions, [(3, 4), (3, 4)])


def test_mean_distance_is_arithmetic_mean():
    pr = predict([(0, 0), (100, 0)], 2, (0, 0))  # -> 200, 300
    assert pr.mean_predicted_distance == pytest.approx(250.0)


@settings(max_examples=100, deadline=None)
@given(d0=st.floats(10, 1000), v=st.floats(0.5, 30), ang=st.floats(0, 6.28), method=st.sampled_from(["linear", "em"]))
def test_moving_away_predicts_farther(d0, v, ang, method):
    u = np.array([np.cos(ang), np.sin(ang)])
    hist = [u * (d0 + k * v) for k in range(8)]
    pr = predict(hist, 5, (0.0, 0.0), method)
    assert pr.mean_predicted_distance > np.hypot(*hist[-1])


@settings(max_examples=50, deadline=None)
@given(ts=st.lists(st.integers(0, 40), min_size=2, max_size=10, unique=True))
def test_resample_passes_through_samples(ts):
    times = np.array(sorted(ts), dtype=float)
    xy = np.column_stack([times ** 1.5, -times])
    out = resample(times, xy, np.arange(41.0))
    assert np.allclose(out[times.astype(int)], xy)
