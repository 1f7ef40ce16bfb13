"""CSV writers and the sensor-log reader."""
import csv
import logging
import random

import numpy as np
import pytest

from relpose import io as rio
from relpose.simulation import SimConfig, run_trial, summarize_nees


@pytest.fixture(scope="module")
def trial():
    return run_trial(SimConfig(duration=2.0), (3, 0))


def _read(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


def test_fmt_round_trips():
    for x in (0.1, 1 / 3, -2.5e-300, 123456789.123456789, np.pi):
        assert float(rio.fmt(x)) == x


def test_estimate_and_truth_csv(tmp_path, trial):
    rio.write_estimate_csv(tmp_path / "e.csv", trial)
    rio.write_truth_csv(tmp_path / "t.csv", trial)
    e, t = _read(tmp_path / "e.csv"), _read(tmp_path / "t.csv")
    assert e[0] == rio.ESTIMATE_HEADER
    assert t[0] == rio.TRUTH_HEADER
    assert len(e) == len(t) == len(trial.t) + 1
    assert all(len(r) == len(rio.ESTIMATE_HEADER) for r in e)
    np.testing.assert_array_equal([float(r[0]) for r in e[1:]], trial.t)


def test_nees_csv_has_aggregate_row(tmp_path, trial):
    s = summarize_nees([trial], 0.2)
    rio.write_nees_csv(tmp_path / "n.csv", [trial], s)
    rows = _read(tmp_path / "n.csv")
    assert rows[0] == rio.NEES_HEADER
    assert rows[-1][0] == "aggregate"
    assert float(rows[-1][2]) == s.mean_post_transient
    assert sum(r[0] == "mean" for r in rows) == len(trial.t)


def test_log_round_trip_is_lossless(tmp_path, trial):
    path = tmp_path / "log.csv"
    rio.write_log(path, rio.log_rows_from_trial(trial))
    a = rio.ingest_log(path)
    assert set(a.imu) == {0, 1}
    assert len(a.imu[0]) == len(trial.imu_t)
    np.testing.assert_array_equal(a.arrays()["imu1"][:, 1:4], trial.imu.omega[1])
    np.testing.assert_array_equal(a.arrays()["imu0"][:, 4:7], trial.imu.alpha[0])
    assert len(a.ranges[1]) == len(trial.measurements)
    assert a.gaps == []
    # Re-export and re-ingest: identical bytes and streams.
    rows = []
    for rid, s in a.imu.items():
        rows += [(u.t, rid, "imu", [*u.omega, *u.alpha]) for u in s]
    for rid, s in a.ranges.items():
        rows += [(z.t, rid, "range", [z.rho, z.sigma, *z.tag_0, *z.tag_i]) for z in s]
    for rid, s in a.truth.items():
        rows += [(x.t, rid, "truth", [*x.pose.C.ravel(), *x.pose.v, *x.pose.r, *x.bias_gyr, *x.bias_acc])
                 for x in s]
    rio.write_log(tmp_path / "log2.csv", rows)
    assert (tmp_path / "log2.csv").read_bytes() == path.read_bytes()


def test_shuffled_rows_give_identical_streams(tmp_path, trial):
    path = tmp_path / "log.csv"
    rio.write_log(path, rio.log_rows_from_trial(trial))
    lines = path.read_text().splitlines()
    body = lines[1:]
    random.Random(0).shuffle(body)
    (tmp_path / "shuf.csv").write_text("\n".join([lines[0]] + body) + "\n")
    a, b = rio.ingest_log(path).arrays(), rio.ingest_log(tmp_path / "shuf.csv").arrays()
    assert a.keys() == b.keys()
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])


def test_malformed_row_reports_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("t,robot_id,type,payload\n0.0,0,imu,1,2,3,4,5,6\n0.01,0,imu,1,2,3\n")
    with pytest.raises(rio.LogFormatError, match="line 3"):
        rio.ingest_log(path)
    path.write_text("t,robot_id,type,payload\n0.0,0,imu,1,2,3,4,5,x\n")
    with pytest.raises(rio.LogFormatError, match="line 2"):
        rio.ingest_log(path)
    path.write_text("t,robot_id,type,payload\n0.0,1,range,-1,0.1,0,0,0,0,0,0\n")
    with pytest.raises(rio.LogFormatError, match="line 2"):
        rio.ingest_log(path)
    path.write_text("t,robot_id,type,payload\n0.0,1,gps,1\n")
    with pytest.raises(rio.LogFormatError, match="unknown"):
        rio.ingest_log(path)
    path.write_text("time,robot,kind\n")
    with pytest.raises(rio.LogFormatError, match="line 1"):
        rio.ingest_log(path)


def test_repeated_timestamp_rejected(tmp_path):
    path = tmp_path / "dup.csv"
    path.write_text("t,robot_id,type,payload\n0.0,0,imu,1,2,3,4,5,6\n0.0,0,imu,0,2,3,4,5,6\n")
    with pytest.raises(rio.LogFormatError, match="repeated timestamp"):
        rio.ingest_log(path)


def test_empty_file_warns(tmp_path, caplog):
    path = tmp_path / "empty.csv"
    path.write_text("")
    with caplog.at_level(logging.WARNING):
        s = rio.ingest_log(path)
    assert s.empty
    assert "empty" in caplog.text


def test_gaps_are_reported(tmp_path, caplog):
    ts = [k * 0.01 for k in range(20)] + [1.0 + k * 0.01 for k in range(5)]
    body = "".join(f"{t!r},0,imu,0,0,0,0,0,0\n" for t in ts)
    path = tmp_path / "gap.csv"
    path.write_text("t,robot_id,type,payload\n" + body)
    with caplog.at_level(logging.WARNING):
        s = rio.ingest_log(path)
    assert len(s.gaps) == 1
    label, t0, t1 = s.gaps[0]
    assert label == "imu0" and t0 == pytest.approx(0.19) and t1 == 1.0
    assert "gap" in caplog.text
