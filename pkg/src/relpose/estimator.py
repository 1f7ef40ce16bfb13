"""Asynchronous-input error-state filter on DE_2(3) x R^6.

State: the relative pose ``T`` (robot ``i`` in robot 0's frame), robot 0's gyro
bias and the relative accelerometer bias. The error state is
``[dxi (9); db_gyr (3); db_acc (3)]`` with ``T_true = T @ Exp(dxi)`` and
``b_true = b + db``.

Between communications robot 0 only applies its own factor, ``T <- B_0^-1 T``,
so the time entry ``T.c`` runs negative: it equals minus the time since the
last RMI. Right-multiplying by the neighbour's RMI (whose ``c`` is the window
length) brings the pose back to SE_2(3).
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import chi2

from .lie import ExtendedPose, right_error, se23_exp, skew
from .preintegration import Rmi
from .process import ImuSample, NoiseParams, build_process_noise, linearize_B, make_B

log = logging.getLogger(__name__)

SYNC_TOL = 1e-9
MAX_CONDITION = 1e12


class FilterDivergence(RuntimeError):
    pass


class DesynchronizedRmi(ValueError):
    pass


@dataclass(frozen=True)
class FilterSettings:
    noise: NoiseParams = NoiseParams()
    estimate_bias: bool = True
    # Chi-square probability for the range innovation gate; None disables it.
    gate_prob: float | None = 0.9973

    @property
    def gate(self) -> float:
        return np.inf if self.gate_prob is None else float(chi2.ppf(self.gate_prob, 1))


@dataclass(frozen=True, eq=False)
class FilterState:
    T: ExtendedPose
    bias_gyr: np.ndarray
    bias_acc: np.ndarray
    P: np.ndarray
    t: float = 0.0

    @property
    def elapsed(self) -> float:
        """Time since the last RMI was applied."""
        return -self.T.c


@dataclass(frozen=True, eq=False)
class RangeMeasurement:
    t: float
    rho: float
    tag_0: np.ndarray
    tag_i: np.ndarray
    sigma: float
    neighbour: int = 1

    def __post_init__(self):
        if self.rho < 0.0:
            raise ValueError("range must be non-negative")
        if not self.sigma > 0.0:
            raise ValueError("range std must be positive")


def initial_state(T: ExtendedPose, bias_gyr, bias_acc, sigma_att, sigma_vel, sigma_pos,
                  sigma_gyr_bias, sigma_acc_bias, estimate_bias: bool = True,
                  t: float = 0.0) -> FilterState:
    diag = [sigma_att**2] * 3 + [sigma_vel**2] * 3 + [sigma_pos**2] * 3
    if estimate_bias:
        diag += [sigma_gyr_bias**2] * 3 + [sigma_acc_bias**2] * 3
    else:
        diag += [0.0] * 6
        bias_gyr = np.zeros(3)
        bias_acc = np.zeros(3)
    return FilterState(T, np.asarray(bias_gyr, dtype=float), np.asarray(bias_acc, dtype=float),
                       np.diag(diag), float(t))


def _sym(P):
    return 0.5 * (P + P.T)


def _robot0_step(x: FilterState, u0: ImuSample, dt: float):
    B0 = make_B(u0, x.bias_gyr, x.bias_acc, dt)
    L0 = linearize_B(u0, x.bias_gyr, x.bias_acc, dt, bias_mode="full").L
    return B0, L0


def no_comm_jacobians(x: FilterState, u0: ImuSample, dt: float):
    """Predicted pose, state transition ``A`` and IMU-noise input matrix ``G``.

    ``G`` maps robot 0's white IMU noise (6) into the error state.
    """
    B0, L0 = _robot0_step(x, u0, dt)
    T_new = (B0.inverse() @ x.T).normalized()
    F = T_new.inverse().adjoint() @ L0
    A = np.eye(15)
    A[0:9, 9:15] = F
    G = np.zeros((15, 6))
    G[0:9] = F
    return T_new, A, G


def predict_no_comm(x: FilterState, u0: ImuSample, settings: FilterSettings, dt: float) -> FilterState:
    T_new, A, G = no_comm_jacobians(x, u0, dt)
    Q = build_process_noise(settings.noise, G[0:9], dt, settings.estimate_bias)
    P = _sym(A @ x.P @ A.T + Q)
    return replace(x, T=T_new, P=P, t=x.t + dt)


def _check_window(x: FilterState, rmi: Rmi, dt: float):
    gap = x.T.c - dt + rmi.duration
    if abs(gap) > SYNC_TOL:
        raise DesynchronizedRmi(
            f"RMI covers {rmi.duration!r} s but robot 0 window is {dt - x.T.c!r} s"
        )


def rmi_jacobians(x: FilterState, u0: ImuSample, rmi: Rmi, dt: float):
    """Pose after the RMI step, ``A``, robot-0 noise input ``G`` and RMI noise input."""
    _check_window(x, rmi, dt)
    B0, L0 = _robot0_step(x, u0, dt)
    T_new = B0.inverse() @ x.T @ rmi.delta
    T_new = ExtendedPose(T_new.C, T_new.v, T_new.r, 0.0).normalized()
    F = T_new.inverse().adjoint() @ L0
    A = np.eye(15)
    A[0:9, 0:9] = rmi.delta.inverse().adjoint()
    A[0:9, 9:15] = F
    G = np.zeros((15, 6))
    G[0:9] = F
    W = np.zeros((15, 9))
    W[0:9] = np.eye(9)
    return T_new, A, G, W


def update_on_rmi(x: FilterState, u0: ImuSample, rmi: Rmi, settings: FilterSettings, dt: float) -> FilterState:
    """Last robot-0 step of a window combined with the neighbour's RMI."""
    T_new, A, G, W = rmi_jacobians(x, u0, rmi, dt)
    Q = build_process_noise(settings.noise, G[0:9], dt, settings.estimate_bias)
    Q += W @ rmi.cov @ W.T
    P = _sym(A @ x.P @ A.T + Q)
    return replace(x, T=T_new, P=P, t=x.t + dt)


def predict_synchronous(x: FilterState, u0: ImuSample, ui: ImuSample, bias_gyr_i,
                        settings: FilterSettings, dt: float, bias_cov_i=None) -> FilterState:
    """Reference filter that receives the neighbour's IMU at every step."""
    B0, L0 = _robot0_step(x, u0, dt)
    Bi = make_B(ui, bias_gyr_i, None, dt)
    Li = linearize_B(ui, bias_gyr_i, None, dt, bias_mode="gyro")
    T_new = B0.inverse() @ x.T @ Bi
    T_new = ExtendedPose(T_new.C, T_new.v, T_new.r, x.T.c).normalized()
    F = T_new.inverse().adjoint() @ L0
    A = np.eye(15)
    A[0:9, 0:9] = Bi.inverse().adjoint()
    A[0:9, 9:15] = F
    Q = build_process_noise(settings.noise, F, dt, settings.estimate_bias)
    Q[0:9, 0:9] += Li.L @ settings.noise.input_cov @ Li.L.T
    if bias_cov_i is not None:
        Q[0:9, 0:9] += Li.L_bias @ bias_cov_i @ Li.L_bias.T
    P = _sym(A @ x.P @ A.T + Q)
    return replace(x, T=T_new, P=P, t=x.t + dt)


def predicted_range(T: ExtendedPose, z: RangeMeasurement):
    """Predicted range and the 1x15 measurement Jacobian."""
    y = T.C @ z.tag_i + T.r - z.tag_0
    rho = float(np.sqrt(y @ y))
    H = np.zeros((1, 15))
    if rho > 0.0:
        u = y / rho
        H[0, 0:3] = -u @ T.C @ skew(z.tag_i)
        H[0, 6:9] = u @ T.C
    return rho, H


def range_update(x: FilterState, z: RangeMeasurement, settings: FilterSettings,
                 stats: dict | None = None) -> FilterState:
    """Joseph-form update with one tag-to-tag range.

    Only valid right after an RMI (``T.c == 0``); in between, the pose
    estimate lacks the neighbour's motion.
    """
    if abs(x.T.c) > SYNC_TOL:
        raise DesynchronizedRmi("range update requires a pose synchronized by an RMI")
    rho_hat, H = predicted_range(x.T, z)
    if rho_hat < 1e-6:
        log.warning("predicted range %.3g m too small, skipping update", rho_hat)
        if stats is not None:
            stats["skipped"] = stats.get("skipped", 0) + 1
        return x
    R = z.sigma**2
    S = float((H @ x.P @ H.T)[0, 0]) + R
    nu = z.rho - rho_hat
    if nu * nu / S > settings.gate:
        if stats is not None:
            stats["rejected"] = stats.get("rejected", 0) + 1
        return x
    K = (x.P @ H.T) / S
    dx = (K * nu).ravel()
    IKH = np.eye(15) - K @ H
    P = _sym(IKH @ x.P @ IKH.T + R * (K @ K.T))
    if stats is not None:
        stats["accepted"] = stats.get("accepted", 0) + 1
    return FilterState(
        T=(x.T @ se23_exp(dx[0:9])).normalized(),
        bias_gyr=x.bias_gyr + dx[9:12],
        bias_acc=x.bias_acc + dx[12:15],
        P=P,
        t=x.t,
    )


def state_error(x: FilterState, T_true: ExtendedPose, bias_gyr_true, bias_acc_true) -> np.ndarray:
    return np.concatenate((
        right_error(x.T, T_true),
        np.asarray(bias_gyr_true) - x.bias_gyr,
        np.asarray(bias_acc_true) - x.bias_acc,
    ))


def nees(x: FilterState, T_true: ExtendedPose, bias_gyr_true, bias_acc_true,
         dims: int | None = None) -> float:
    """Normalized estimation error squared over the first ``dims`` error states."""
    e = state_error(x, T_true, bias_gyr_true, bias_acc_true)
    n = 15 if dims is None else dims
    P = x.P[:n, :n]
    w = np.linalg.eigvalsh(P)
    if w[0] <= 0.0 or w[-1] / w[0] > MAX_CONDITION:
        raise FilterDivergence(f"covariance not invertible (eigenvalues {w[0]:.3g}..{w[-1]:.3g})")
    e = e[:n]
    return float(e @ np.linalg.solve(P, e))
