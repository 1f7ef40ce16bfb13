"""Filter loop shared by the simulator and the log replay.

Both robots' IMU streams are on one grid. The neighbour preintegrates each
window of ``n_rmi`` samples; robot 0 predicts without communication inside a
window and fuses the RMI on its last sample. Range updates only happen right
after an RMI, when the relative pose is back on SE_2(3).
"""
from __future__ import annotations

from collections.abc import Callable, Sequence

from .estimator import FilterSettings, FilterState, RangeMeasurement, predict_no_comm, range_update, update_on_rmi
from .preintegration import Rmi, rmi_append
from .process import ImuSample


def _range_key(z: RangeMeasurement):
    return (tuple(z.tag_0), tuple(z.tag_i), z.rho, z.sigma)


def run_filter(
    x: FilterState,
    imu0: Sequence[ImuSample],
    imu1: Sequence[ImuSample],
    dt: float,
    n_rmi: int,
    settings: FilterSettings,
    neighbour_bias: Callable[[int], tuple],
    ranges: Callable[[int], list[RangeMeasurement]],
    on_epoch: Callable[[int, FilterState], None] | None = None,
    stats: dict | None = None,
) -> FilterState:
    """Run robot 0's filter over the streams and return the final state.

    ``neighbour_bias(k)`` gives the neighbour's gyro-bias estimate and its
    covariance for the window opening at step ``k``; ``ranges(k)`` lists the
    measurements to fuse at RMI epoch ``k`` (possibly none). ``on_epoch`` is
    called after every RMI epoch with the step index and the updated state.
    """
    if len(imu0) != len(imu1):
        raise ValueError("IMU streams must have the same length")
    if n_rmi < 1:
        raise ValueError("n_rmi must be positive")
    est, cov = neighbour_bias(0)
    rmi = Rmi.identity(0, cov)
    for k, (u0, u1) in enumerate(zip(imu0, imu1)):
        rmi = rmi_append(rmi, u1, est, settings.noise, dt)
        if (k + 1) % n_rmi:
            x = predict_no_comm(x, u0, settings, dt)
            continue
        x = update_on_rmi(x, u0, rmi, settings, dt)
        # Sequential updates do not commute exactly; fix a canonical order.
        for z in sorted(ranges(k + 1), key=_range_key):
            x = range_update(x, z, settings, stats)
        if on_epoch is not None:
            on_epoch(k + 1, x)
        if k + 1 < len(imu0):
            est, cov = neighbour_bias(k + 1)
            rmi = Rmi.identity(k + 1, cov)
    return x
