"""Relative motion increments (RMIs) built by the neighbour.

The neighbour multiplies its gyro-corrected one-step factors,
``dT <- dT @ B_i``, and tracks the covariance of the right perturbation
``dT = dT_bar Exp(dw)``:

    dw <- Ad(B_bar^-1) dw + L du - L E db_gyr

The accelerometer is never corrected here. The bias estimate error ``db_gyr``
is one draw per window, so its contribution is carried through the bias
Jacobian ``G = d(dw)/d(db_gyr)`` and added as ``G S G^T``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .lie import ExtendedPose
from .process import ImuSample, NoiseParams, linearize_B, make_B

_TRIU = np.triu_indices(9)


@dataclass(frozen=True, eq=False)
class Rmi:
    delta: ExtendedPose = field(default_factory=ExtendedPose.identity)
    noise_cov: np.ndarray = field(default_factory=lambda: np.zeros((9, 9)))
    bias_jac: np.ndarray = field(default_factory=lambda: np.zeros((9, 3)))
    bias_cov: np.ndarray = field(default_factory=lambda: np.zeros((3, 3)))
    start_index: int = 0
    end_index: int = 0

    @classmethod
    def identity(cls, start_index: int = 0, bias_cov=None) -> Rmi:
        return cls(
            start_index=start_index,
            end_index=start_index,
            bias_cov=np.zeros((3, 3)) if bias_cov is None else np.asarray(bias_cov, dtype=float),
        )

    @property
    def duration(self) -> float:
        return self.delta.c

    @property
    def cov(self) -> np.ndarray:
        G = self.bias_jac
        P = self.noise_cov + G @ self.bias_cov @ G.T
        return 0.5 * (P + P.T)


def rmi_append(
    rmi: Rmi, u: ImuSample, bias_gyr_est, imu_noise: NoiseParams, dt: float, bias_cov=None
) -> Rmi:
    """Extend ``rmi`` by one IMU sample.

    ``bias_cov`` overrides the window's gyro-bias covariance; it is normally
    fixed when the window is opened (see :meth:`Rmi.identity`).
    """
    B = make_B(u, bias_gyr_est, None, dt)
    jac = linearize_B(u, bias_gyr_est, None, dt, bias_mode="gyro")
    A = B.inverse().adjoint()
    L = jac.L
    noise = A @ rmi.noise_cov @ A.T + L @ imu_noise.input_cov @ L.T
    G = A @ rmi.bias_jac - jac.L_bias
    return replace(
        rmi,
        delta=(rmi.delta @ B).normalized(),
        noise_cov=0.5 * (noise + noise.T),
        bias_jac=G,
        bias_cov=rmi.bias_cov if bias_cov is None else np.asarray(bias_cov, dtype=float),
        end_index=rmi.end_index + 1,
    )


def preintegrate(samples, bias_gyr_est, imu_noise: NoiseParams, dt: float, bias_cov=None,
                 start_index: int = 0) -> Rmi:
    rmi = Rmi.identity(start_index, bias_cov)
    for u in samples:
        rmi = rmi_append(rmi, u, bias_gyr_est, imu_noise, dt)
    return rmi


def rmi_apply(T_start: ExtendedPose, B0_product: ExtendedPose, rmi: Rmi, tol: float = 1e-9) -> ExtendedPose:
    """``B0_product^-1 @ T_start @ rmi.delta`` for windows of equal length."""
    if abs(B0_product.c - rmi.duration) > tol:
        raise ValueError(
            f"RMI duration {rmi.duration!r} does not match robot 0 window {B0_product.c!r}"
        )
    return B0_product.inverse() @ T_start @ rmi.delta


# --- CSV record -----------------------------------------------------------

RMI_HEADER = (
    ["start_index", "end_index", "duration"]
    + [f"C{i}{j}" for i in range(3) for j in range(3)]
    + [f"v{i}" for i in range(3)]
    + [f"r{i}" for i in range(3)]
    + ["c"]
    + [f"P{i}{j}" for i, j in zip(*_TRIU)]
)


def _fmt(x: float) -> str:
    return repr(float(x))


def rmi_to_row(rmi: Rmi) -> list[str]:
    d = rmi.delta
    values = np.concatenate((d.C.reshape(-1), d.v, d.r, [d.c], rmi.cov[_TRIU]))
    return [str(rmi.start_index), str(rmi.end_index), _fmt(rmi.duration)] + [_fmt(x) for x in values]


def rmi_from_row(row) -> Rmi:
    if len(row) != len(RMI_HEADER):
        raise ValueError(f"RMI row has {len(row)} fields, expected {len(RMI_HEADER)}")
    vals = np.array([float(x) for x in row[3:]])
    C = vals[0:9].reshape(3, 3)
    delta = ExtendedPose(C, vals[9:12].copy(), vals[12:15].copy(), float(vals[15]))
    if float(row[2]) != delta.c:
        raise ValueError("RMI duration field disagrees with the c entry")
    P = np.zeros((9, 9))
    P[_TRIU] = vals[16:]
    P = P + np.triu(P, 1).T
    return Rmi(delta=delta, noise_cov=P, start_index=int(row[0]), end_index=int(row[1]))
