"""Run robot 0's filter over a recorded sensor log."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .engine import run_filter
from .estimator import FilterDivergence, FilterSettings, initial_state, nees, state_error
from .io import LogFormatError, LogStreams
from .process import relative_accel_bias

log = logging.getLogger(__name__)

TIME_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class ReplayResult:
    t: np.ndarray
    est_C: np.ndarray
    est_v: np.ndarray
    est_r: np.ndarray
    est_bias_gyr: np.ndarray
    est_bias_acc: np.ndarray
    P: np.ndarray
    nees: np.ndarray
    position_error: np.ndarray
    range_stats: dict

    @property
    def position_rmse(self) -> float:
        e = self.position_error
        e = e[np.all(np.isfinite(e), axis=1)]
        return float(np.sqrt(np.mean(np.sum(e * e, axis=1)))) if len(e) else math.nan


def _truth_index(samples):
    return {round(x.t / TIME_TOL): x for x in samples}


def replay(streams: LogStreams, settings: FilterSettings, init_sigmas, neighbour_id: int = 1,
           neighbour_bias_gyr=(0.0, 0.0, 0.0)) -> ReplayResult:
    """Filter the log's IMU and range streams.

    The filter starts from the logged truth at the first IMU time, with prior
    stds ``init_sigmas``. The neighbour's gyro-bias estimate is its logged
    truth at each window start when available, else ``neighbour_bias_gyr``.
    Ranges are fused at the first RMI epoch at or after their timestamp.
    """
    p = settings.noise
    imu0 = streams.imu.get(0, [])
    imu1 = streams.imu.get(neighbour_id, [])
    if not imu0 or not imu1:
        raise LogFormatError(f"log needs IMU streams for robots 0 and {neighbour_id}")
    if len(imu0) != len(imu1) or any(abs(a.t - b.t) > TIME_TOL for a, b in zip(imu0, imu1)):
        raise LogFormatError("IMU streams of the two robots are not on a common time grid")
    dt = p.dt
    t0 = imu0[0].t
    steps = [(u.t - t0) / dt for u in imu0]
    if any(abs(s - k) > 1e-6 for k, s in enumerate(steps)):
        raise LogFormatError(f"IMU samples are not spaced by the configured period {dt!r} s")
    n_rmi = int(round(p.rmi_period / dt))

    truth0 = _truth_index(streams.truth.get(0, []))
    truth1 = _truth_index(streams.truth.get(neighbour_id, []))

    def truth_at(t):
        key = round(t / TIME_TOL)
        a, b = truth0.get(key), truth1.get(key)
        if a is None or b is None:
            return None
        T = a.pose.inverse() @ b.pose
        return T, a.bias_gyr, relative_accel_bias(a.bias_acc, b.bias_acc, T)

    first = truth_at(t0)
    if first is None:
        raise LogFormatError(f"log needs truth for robots 0 and {neighbour_id} at t={t0!r} to initialize")
    s = init_sigmas
    x = initial_state(*first, s.att, s.vel, s.pos, s.gyr_bias, s.acc_bias, settings.estimate_bias)

    # Ranges go to the first epoch (step index) at or after their time.
    pending = {}
    for z in streams.ranges.get(neighbour_id, []):
        k = math.ceil((z.t - t0) / dt - 1e-6)
        epoch = max(n_rmi, n_rmi * math.ceil(k / n_rmi))
        if epoch > len(imu0):
            log.warning("range at t=%.6f falls after the last RMI epoch and is dropped", z.t)
            continue
        pending.setdefault(epoch, []).append(z)

    bias_cov = p.sigma_neighbour_bias**2 * np.eye(3)
    default_bias = np.asarray(neighbour_bias_gyr, dtype=float)

    def neighbour_bias(k):
        b = truth1.get(round(imu0[k].t / TIME_TOL))
        return (default_bias if b is None else b.bias_gyr), bias_cov

    rows = []

    def record(k, state):
        t = t0 + k * dt if k >= len(imu0) else imu0[k].t
        truth = truth_at(t)
        val = math.nan
        err = np.full(3, math.nan)
        if truth is not None:
            err = state_error(state, *truth)[6:9]
            try:
                val = nees(state, *truth, 15 if settings.estimate_bias else 9)
            except FilterDivergence:
                val = math.inf
        rows.append((t, state, val, err))

    stats: dict = {}
    record(0, x)
    run_filter(x, imu0, imu1, dt, n_rmi, settings, neighbour_bias, lambda k: pending.get(k, []),
               record, stats)
    states = [r[1] for r in rows]
    return ReplayResult(
        t=np.array([r[0] for r in rows]),
        est_C=np.array([s.T.C for s in states]),
        est_v=np.array([s.T.v for s in states]),
        est_r=np.array([s.T.r for s in states]),
        est_bias_gyr=np.array([s.bias_gyr for s in states]),
        est_bias_acc=np.array([s.bias_acc for s in states]),
        P=np.array([s.P for s in states]),
        nees=np.array([r[2] for r in rows]),
        position_error=np.array([r[3] for r in rows]),
        range_stats=stats,
    )
