"""CSV output and the sensor-log format used for replay.

All floats are written with 17 significant digits, which round-trips float64
exactly.

Log format (one record per row, header ``t,robot_id,type,payload``):

* ``imu``:   omega (3), alpha (3)
* ``range``: rho, sigma, tag_0 (3), tag_i (3); ``robot_id`` is the neighbour
* ``truth``: C (9, row-major), v (3), r (3), bias_gyr (3), bias_acc (3)
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .estimator import RangeMeasurement
from .lie import ExtendedPose
from .process import ImuSample

log = logging.getLogger(__name__)

LOG_HEADER = ["t", "robot_id", "type", "payload"]
PAYLOAD_SIZE = {"imu": 6, "range": 8, "truth": 21}
_TYPE_ORDER = {"truth": 0, "imu": 1, "range": 2}
GAP_FACTOR = 10.0


def fmt(x) -> str:
    return format(float(x), ".17g")


def _names(prefix, n):
    return [f"{prefix}{i}" for i in range(n)]


ESTIMATE_HEADER = (
    ["t"] + _names("C", 9) + _names("v", 3) + _names("r", 3)
    + _names("beta_gyr", 3) + _names("beta_acc_rel", 3) + _names("P", 15) + ["nees"]
)

TRUTH_HEADER = (
    ["t"]
    + [f"{n}_{m}" for m in (0, 1) for n in _names("C", 9) + _names("v", 3) + _names("r", 3)]
    + [f"{n}_{m}" for m in (0, 1) for n in _names("beta_gyr", 3) + _names("beta_acc", 3)]
    + _names("beta_acc_rel", 3)
)

NEES_HEADER = ["trial", "t", "nees"]


class LogFormatError(ValueError):
    pass


def _write_rows(path, header, rows):
    path = Path(path)
    with path.open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def estimate_rows(t, C, v, r, bias_gyr, bias_acc, P, nees_values):
    for k in range(len(t)):
        vals = np.concatenate((
            [t[k]], C[k].reshape(-1), v[k], r[k], bias_gyr[k], bias_acc[k], np.diag(P[k]), [nees_values[k]],
        ))
        yield [fmt(x) for x in vals]


def write_estimate_csv(path, result):
    return _write_rows(path, ESTIMATE_HEADER, estimate_rows(
        result.t, result.est_C, result.est_v, result.est_r, result.est_bias_gyr,
        result.est_bias_acc, result.P, result.nees))


def write_truth_csv(path, result):
    def rows():
        (C0, v0, r0), (C1, v1, r1) = result.truth_abs
        for k in range(len(result.t)):
            vals = np.concatenate((
                [result.t[k]],
                C0[k].reshape(-1), v0[k], r0[k], C1[k].reshape(-1), v1[k], r1[k],
                result.truth_bias_gyr[0, k], result.truth_bias_acc[0, k],
                result.truth_bias_gyr[1, k], result.truth_bias_acc[1, k],
                result.truth_rel_bias_acc[k],
            ))
            yield [fmt(x) for x in vals]
    return _write_rows(path, TRUTH_HEADER, rows())


def write_nees_csv(path, results, summary):
    """Per-trial NEES, the per-epoch trial average and one aggregate row.

    The aggregate row holds the start of the post-transient window in ``t``
    and the post-transient mean of the average in ``nees``.
    """
    def rows():
        for j, res in enumerate(results):
            for t, n in zip(res.t, res.nees):
                yield [str(j), fmt(t), fmt(n)]
        for t, n in zip(summary.t, summary.average):
            yield ["mean", fmt(t), fmt(n)]
        t0 = summary.t[summary.post_transient][0]
        yield ["aggregate", fmt(t0), fmt(summary.mean_post_transient)]
    return _write_rows(path, NEES_HEADER, rows())


# --- sensor logs ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class TruthSample:
    t: float
    pose: ExtendedPose
    bias_gyr: np.ndarray
    bias_acc: np.ndarray


@dataclass(eq=False)
class LogStreams:
    imu: dict = field(default_factory=dict)
    ranges: dict = field(default_factory=dict)
    truth: dict = field(default_factory=dict)
    gaps: list = field(default_factory=list)

    @property
    def empty(self) -> bool:
        return not (self.imu or self.ranges or self.truth)

    def arrays(self) -> dict:
        """Flat float arrays per stream, for exact comparisons."""
        out = {}
        for m, s in self.imu.items():
            out[f"imu{m}"] = np.array([[u.t, *u.omega, *u.alpha] for u in s]).reshape(-1, 7)
        for m, s in self.ranges.items():
            out[f"range{m}"] = np.array([[z.t, z.rho, z.sigma, *z.tag_0, *z.tag_i] for z in s]).reshape(-1, 9)
        for m, s in self.truth.items():
            out[f"truth{m}"] = np.array([
                [x.t, *x.pose.C.reshape(-1), *x.pose.v, *x.pose.r, *x.bias_gyr, *x.bias_acc] for x in s
            ]).reshape(-1, 22)
        return out


def log_rows_from_trial(result, neighbour_id: int = 1):
    """Rows ``(t, robot_id, type, payload)`` for a simulated trial."""
    imu = result.imu
    for m in (0, 1):
        rid = 0 if m == 0 else neighbour_id
        for k, t in enumerate(result.imu_t):
            yield (t, rid, "imu", [*imu.omega[m, k], *imu.alpha[m, k]])
    for z in result.measurements:
        yield (z.t, neighbour_id, "range", [z.rho, z.sigma, *z.tag_0, *z.tag_i])
    for m in (0, 1):
        rid = 0 if m == 0 else neighbour_id
        C, v, r = result.truth_abs[m]
        for k, t in enumerate(result.t):
            yield (t, rid, "truth", [*C[k].reshape(-1), *v[k], *r[k],
                                     *result.truth_bias_gyr[m, k], *result.truth_bias_acc[m, k]])


def write_log(path, rows):
    rows = sorted(rows, key=lambda row: (row[0], row[1], _TYPE_ORDER[row[2]], tuple(row[3])))
    return _write_rows(path, LOG_HEADER, (
        [fmt(t), str(rid), kind] + [fmt(x) for x in payload] for t, rid, kind, payload in rows
    ))


def _parse_row(row, lineno):
    if len(row) < 3:
        raise LogFormatError(f"line {lineno}: expected t, robot_id, type, payload")
    kind = row[2].strip()
    if kind not in PAYLOAD_SIZE:
        raise LogFormatError(f"line {lineno}: unknown record type {kind!r}")
    n = PAYLOAD_SIZE[kind]
    if len(row) - 3 != n:
        raise LogFormatError(f"line {lineno}: {kind} record needs {n} payload values, got {len(row) - 3}")
    try:
        t = float(row[0])
        rid = int(row[1])
        payload = [float(x) for x in row[3:]]
    except ValueError as exc:
        raise LogFormatError(f"line {lineno}: {exc}") from exc
    if not all(math.isfinite(x) for x in [t, *payload]):
        raise LogFormatError(f"line {lineno}: non-finite value")
    if rid < 0:
        raise LogFormatError(f"line {lineno}: negative robot_id")
    return t, rid, kind, payload, lineno


def _find_gaps(times, label):
    if len(times) < 3:
        return []
    d = np.diff(times)
    nominal = float(np.median(d))
    return [(label, float(times[i]), float(times[i + 1])) for i in np.flatnonzero(d > GAP_FACTOR * nominal)]


def ingest_log(path) -> LogStreams:
    """Read, sort and validate a sensor log.

    Rows may come in any order; the result only depends on their content.
    Repeated timestamps within one IMU or truth stream are an error, as are
    malformed rows (reported with their line number). Gaps longer than ten
    nominal periods are logged and listed in ``gaps``.
    """
    path = Path(path)
    records = []
    with path.open(newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            log.warning("log %s is empty", path)
            return LogStreams()
        if [h.strip() for h in header[:3]] != LOG_HEADER[:3]:
            raise LogFormatError(f"line 1: header must start with {','.join(LOG_HEADER[:3])}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            records.append(_parse_row(row, lineno))
    if not records:
        log.warning("log %s has no records", path)
        return LogStreams()
    records.sort(key=lambda r: (r[0], r[1], _TYPE_ORDER[r[2]], tuple(r[3])))

    streams = LogStreams()
    last = {}
    for t, rid, kind, p, lineno in records:
        key = (rid, kind)
        if kind != "range" and key in last and t <= last[key]:
            raise LogFormatError(f"line {lineno}: repeated timestamp {t!r} in {kind} stream of robot {rid}")
        last[key] = t
        if kind == "imu":
            streams.imu.setdefault(rid, []).append(ImuSample(t, np.array(p[0:3]), np.array(p[3:6])))
        elif kind == "range":
            try:
                z = RangeMeasurement(t, p[0], np.array(p[2:5]), np.array(p[5:8]), p[1], neighbour=rid)
            except ValueError as exc:
                raise LogFormatError(f"line {lineno}: {exc}") from exc
            streams.ranges.setdefault(rid, []).append(z)
        else:
            pose = ExtendedPose(np.array(p[0:9]).reshape(3, 3), np.array(p[9:12]), np.array(p[12:15]), 0.0)
            streams.truth.setdefault(rid, []).append(TruthSample(t, pose, np.array(p[15:18]), np.array(p[18:21])))

    for rid, s in sorted(streams.imu.items()):
        streams.gaps += _find_gaps(np.array([u.t for u in s]), f"imu{rid}")
    for label, t0, t1 in streams.gaps:
        log.warning("gap in %s stream between t=%.6f and t=%.6f", label, t0, t1)
    return streams
