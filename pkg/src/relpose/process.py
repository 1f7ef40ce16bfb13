"""Bias-corrected discrete process model and its linearization.

One IMU step of robot ``k`` is the factor
``B = exp((U - B_bias) dt) = M(dt) Exp(V (u - beta))`` and the relative pose
propagates as ``T <- B_0^-1 T B_i``. Robot 0 corrects both its gyro bias and
the relative accelerometer bias; the neighbour only corrects its gyro.

Perturbations are on the right everywhere: ``X = X_bar Exp(delta)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .lie import ExtendedPose, m_matrix, n_matrix, se23_exp, se23_left_jacobian, so3_left_jacobian

# Gyro selector for a 6-vector [omega; alpha].
E = np.vstack((np.eye(3), np.zeros((3, 3))))
# Rotation block selector for 5x5 matrices: PI @ T @ PI.T == C.
PI = np.hstack((np.eye(3), np.zeros((3, 2))))

ZERO3 = np.zeros(3)


@dataclass(frozen=True, eq=False)
class ImuSample:
    t: float
    omega: np.ndarray
    alpha: np.ndarray

    @property
    def u(self) -> np.ndarray:
        return np.concatenate((self.omega, self.alpha))


@dataclass(frozen=True)
class NoiseParams:
    """Sensor noise and timing.

    White-noise stds are per sample. Random-walk stds follow the convention
    ``beta_{k+1} = beta_k + dt * w``, ``w ~ N(0, sigma_rw^2 I)``.
    """

    sigma_gyr: float = 1e-3
    sigma_acc: float = 1e-2
    sigma_gyr_rw: float = 2.5e-5
    sigma_acc_rw: float = 1.58e-3
    sigma_range: float = 0.05
    sigma_neighbour_bias: float = 5e-4
    imu_rate: float = 100.0
    range_rate: float = 10.0
    rmi_period: float = 0.1

    def __post_init__(self):
        for name in (
            "sigma_gyr",
            "sigma_acc",
            "sigma_gyr_rw",
            "sigma_acc_rw",
            "sigma_range",
            "sigma_neighbour_bias",
        ):
            if getattr(self, name) < 0.0:
                raise ValueError(f"{name} must be non-negative")
        for name in ("imu_rate", "range_rate", "rmi_period"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"{name} must be positive")

    @property
    def dt(self) -> float:
        return 1.0 / self.imu_rate

    @property
    def input_cov(self) -> np.ndarray:
        return np.diag([self.sigma_gyr**2] * 3 + [self.sigma_acc**2] * 3)


@dataclass(frozen=True, eq=False)
class ProcessJacobians:
    """Linearization ``B(u + du, b + db) = B_bar Exp(L du - L_bias db)``."""

    L: np.ndarray
    V: np.ndarray
    L_bias: np.ndarray
    u_bar: np.ndarray
    beta_bar: np.ndarray


def _check_dt(dt):
    if not dt > 0.0:
        raise ValueError(f"dt must be positive, got {dt!r}")


def _corrected(omega, alpha, bias_gyr, bias_acc):
    omega = np.asarray(omega, dtype=float) - np.asarray(bias_gyr, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if bias_acc is not None:
        alpha = alpha - np.asarray(bias_acc, dtype=float)
    return omega, alpha


def make_B(u: ImuSample, bias_gyr, bias_acc, dt: float) -> ExtendedPose:
    """One-step factor from the explicit block form.

    ``bias_acc=None`` leaves the accelerometer uncorrected (neighbour side).
    """
    _check_dt(dt)
    omega, alpha = _corrected(u.omega, u.alpha, bias_gyr, bias_acc)
    C, v, r = kernels.b_blocks(omega, alpha, dt)
    return ExtendedPose(C, v, r, dt)


def input_map(omega, dt: float) -> np.ndarray:
    """The 9x6 matrix ``V`` with ``B = M Exp(V [omega; alpha])``.

    ``J_l^-1 N`` is obtained with a linear solve.
    """
    phi = np.asarray(omega, dtype=float) * dt
    V = np.zeros((9, 6))
    V[0:3, 0:3] = dt * np.eye(3)
    V[3:6, 3:6] = dt * np.eye(3)
    V[6:9, 3:6] = 0.5 * dt * dt * np.linalg.solve(so3_left_jacobian(phi), n_matrix(phi))
    return V


def make_B_factored(u: ImuSample, bias_gyr, bias_acc, dt: float) -> ExtendedPose:
    """``M(dt) @ se23_exp(V (u - beta))``; equal to :func:`make_B`."""
    _check_dt(dt)
    omega, alpha = _corrected(u.omega, u.alpha, bias_gyr, bias_acc)
    V = input_map(omega, dt)
    return m_matrix(dt) @ se23_exp(V @ np.concatenate((omega, alpha)))


def linearize_B(
    u: ImuSample, bias_gyr, bias_acc, dt: float, bias_mode: str = "full", exact: bool = True
) -> ProcessJacobians:
    """Jacobians of :func:`make_B` with respect to the input and the bias.

    With ``exact=False`` the input map ``V`` is frozen at the anchor and
    ``L = J_l(-V (u - b)) V``. The default also differentiates ``V`` with
    respect to the gyro input, which is what finite differences of
    :func:`make_B` reproduce.
    """
    _check_dt(dt)
    if bias_mode not in ("full", "gyro"):
        raise ValueError(f"unknown bias_mode {bias_mode!r}")
    omega, alpha = _corrected(u.omega, u.alpha, bias_gyr, bias_acc)
    L, V = kernels.b_jacobians(omega, alpha, dt)
    if not exact:
        L = se23_left_jacobian(-(V @ np.concatenate((omega, alpha)))) @ V
    L_bias = L if bias_mode == "full" else L @ E
    beta = np.concatenate(
        (np.asarray(bias_gyr, dtype=float), ZERO3 if bias_acc is None else np.asarray(bias_acc, dtype=float))
    )
    return ProcessJacobians(L=L, V=V, L_bias=L_bias, u_bar=u.u, beta_bar=beta)


def propagate_pose(T: ExtendedPose, B0: ExtendedPose, Bi: ExtendedPose) -> ExtendedPose:
    return B0.inverse() @ T @ Bi


def propagate_gyro_bias(bias, w, dt: float) -> np.ndarray:
    _check_dt(dt)
    return np.asarray(bias, dtype=float) + dt * np.asarray(w, dtype=float)


def relative_accel_bias(bias_acc0, bias_acci, T: ExtendedPose) -> np.ndarray:
    """``beta_acc0 - C_0i beta_acci`` resolved in robot 0's frame."""
    return np.asarray(bias_acc0, dtype=float) - T.C @ np.asarray(bias_acci, dtype=float)


def propagate_rel_accel_bias(bias, T, B0, Bi, w0, wi, dt: float) -> np.ndarray:
    """Small-``dt`` random-walk update of the relative accelerometer bias.

    ``Bi=None`` drops the neighbour factor (steps without communication).
    """
    _check_dt(dt)
    T_next = B0.inverse() @ T
    if Bi is not None:
        T_next = T_next @ Bi
    return np.asarray(bias, dtype=float) + dt * np.asarray(w0) - T_next.C @ (dt * np.asarray(wi))


def rel_accel_bias_exact(bias_acc0, bias_acci, T, B0, Bi, w0, wi, dt: float) -> np.ndarray:
    """Relative accelerometer bias after one step from the individual walks."""
    T_next = propagate_pose(T, B0, Bi)
    return relative_accel_bias(
        propagate_gyro_bias(bias_acc0, w0, dt), propagate_gyro_bias(bias_acci, wi, dt), T_next
    )


def build_process_noise(
    params: NoiseParams, L: np.ndarray, dt: float, estimate_bias: bool = True
) -> np.ndarray:
    """15x15 discrete process noise for the error state ``[pose; b_gyr; b_acc]``.

    ``L`` maps the 6-vector of white IMU noise into the pose error. The
    relative accelerometer bias collects both robots' accelerometer walks;
    the neighbour's enters rotated by ``C_0i``, which leaves its covariance
    ``dt^2 sigma^2 I`` unchanged.
    """
    _check_dt(dt)
    Q = np.zeros((15, 15))
    Q[0:9, 0:9] = L @ params.input_cov @ L.T
    if estimate_bias:
        Q[9:12, 9:12] = (dt * params.sigma_gyr_rw) ** 2 * np.eye(3)
        Q[12:15, 12:15] = 2.0 * (dt * params.sigma_acc_rw) ** 2 * np.eye(3)
    return 0.5 * (Q + Q.T)
