"""Pure numpy implementations of the hot small-matrix kernels.

This module mirrors ``relpose._kernels`` (Cython) function for function and is
used whenever the compiled extension is unavailable or disabled with
``RELPOSE_PURE_PYTHON=1``.
"""
import math

import numpy as np

# Below this angle the trigonometric coefficients are evaluated by their
# Taylor series (kept to 8th order, so truncation error is below 1e-18).
SERIES_ANGLE = 0.1

BACKEND = "python"

__all__ = [
    "BACKEND",
    "SERIES_ANGLE",
    "skew",
    "coefficients",
    "kappa",
    "so3_exp",
    "so3_left_jacobian",
    "n_matrix",
    "q_matrix",
    "se23_left_jacobian",
    "b_blocks",
    "b_jacobians",
    "de23_adjoint",
    "de23_compose",
    "de23_inverse",
]


def skew(x):
    return np.array(
        [[0.0, -x[2], x[1]], [x[2], 0.0, -x[0]], [-x[1], x[0], 0.0]]
    )


def coefficients(theta):
    """Return the five rotation coefficients used by the closed forms.

    ``sin t/t, (1-cos t)/t^2, (t-sin t)/t^3, (cos t-1+t^2/2)/t^4,
    (2t-3 sin t+t cos t)/(2 t^5)``
    """
    if theta < SERIES_ANGLE:
        t2 = theta * theta
        t4 = t2 * t2
        t6 = t4 * t2
        t8 = t4 * t4
        return (
            1.0 - t2 / 6.0 + t4 / 120.0 - t6 / 5040.0 + t8 / 362880.0,
            0.5 - t2 / 24.0 + t4 / 720.0 - t6 / 40320.0 + t8 / 3628800.0,
            1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t6 / 362880.0 + t8 / 39916800.0,
            1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0 - t6 / 3628800.0 + t8 / 479001600.0,
            1.0 / 120.0 - t2 / 2520.0 + t4 / 120960.0 - t6 / 9979200.0 + t8 / 1245404160.0,
        )
    s = math.sin(theta)
    c = math.cos(theta)
    half = math.sin(0.5 * theta)
    one_minus_cos = 2.0 * half * half
    t2 = theta * theta
    return (
        s / theta,
        one_minus_cos / t2,
        (theta - s) / (t2 * theta),
        (0.5 * t2 - one_minus_cos) / (t2 * t2),
        (2.0 * theta - 3.0 * s + theta * c) / (2.0 * t2 * t2 * theta),
    )


def kappa(theta):
    """Return ``k(t)`` and ``k'(t)/t`` with ``J_l^-1 N = I + k(t) phi^``."""
    if theta < SERIES_ANGLE:
        t2 = theta * theta
        t4 = t2 * t2
        t6 = t4 * t2
        k = -1.0 / 6.0 - t2 / 360.0 - t4 / 15120.0 - t6 / 604800.0 - t4 * t4 / 23950080.0
        dk = -1.0 / 180.0 - t2 / 3780.0 - t4 / 100800.0 - t6 / 2993760.0
        return k, dk
    half = 0.5 * theta
    s = math.sin(half)
    cot = math.cos(half) / s
    t2 = theta * theta
    k = (theta * cot - 2.0) / t2
    dk = ((cot - theta / (2.0 * s * s)) / t2 - 2.0 * (theta * cot - 2.0) / (t2 * theta)) / theta
    return k, dk


def so3_exp(phi):
    phi = np.asarray(phi, dtype=float)
    a, b, _, _, _ = coefficients(math.sqrt(phi @ phi))
    W = skew(phi)
    return np.eye(3) + a * W + b * (W @ W)


def so3_left_jacobian(phi):
    phi = np.asarray(phi, dtype=float)
    _, b, c, _, _ = coefficients(math.sqrt(phi @ phi))
    W = skew(phi)
    return np.eye(3) + b * W + c * (W @ W)


def n_matrix(phi):
    phi = np.asarray(phi, dtype=float)
    _, _, c, d, _ = coefficients(math.sqrt(phi @ phi))
    W = skew(phi)
    return np.eye(3) + 2.0 * c * W + 2.0 * d * (W @ W)


def q_matrix(phi, rho):
    phi = np.asarray(phi, dtype=float)
    _, _, c, d, e = coefficients(math.sqrt(phi @ phi))
    P = skew(phi)
    R = skew(rho)
    PR = P @ R
    RP = R @ P
    PRP = PR @ P
    PPR = P @ PR
    RPP = RP @ P
    return (
        0.5 * R
        + c * (PR + RP + PRP)
        + d * (PPR + RPP - 3.0 * PRP)
        + e * (PRP @ P + P @ PRP)
    )


def se23_left_jacobian(xi):
    xi = np.asarray(xi, dtype=float)
    phi = xi[0:3]
    J = so3_left_jacobian(phi)
    out = np.zeros((9, 9))
    out[0:3, 0:3] = J
    out[3:6, 3:6] = J
    out[6:9, 6:9] = J
    out[3:6, 0:3] = q_matrix(phi, xi[3:6])
    out[6:9, 0:3] = q_matrix(phi, xi[6:9])
    return out


def b_blocks(omega, alpha, dt):
    """Return (C, v, r) of ``exp([[w^, a, 0], [0, 0, 1], [0, 0, 0]] dt)``."""
    phi = np.asarray(omega, dtype=float) * dt
    alpha = np.asarray(alpha, dtype=float)
    a, b, c, d, _ = coefficients(math.sqrt(phi @ phi))
    W = skew(phi)
    WW = W @ W
    eye = np.eye(3)
    C = eye + a * W + b * WW
    J = eye + b * W + c * WW
    N = eye + 2.0 * c * W + 2.0 * d * WW
    return C, dt * (J @ alpha), (0.5 * dt * dt) * (N @ alpha)


def de23_adjoint(C, v, r, c):
    out = np.zeros((9, 9))
    out[0:3, 0:3] = C
    out[3:6, 3:6] = C
    out[6:9, 6:9] = C
    out[3:6, 0:3] = skew(v) @ C
    out[6:9, 0:3] = skew(np.asarray(r) - c * np.asarray(v)) @ C
    out[6:9, 3:6] = -c * C
    return out


def de23_compose(C1, v1, r1, c1, C2, v2, r2, c2):
    return C1 @ C2, C1 @ v2 + v1, C1 @ r2 + c2 * v1 + r1, c1 + c2


def de23_inverse(C, v, r, c):
    Ct = C.T
    return Ct, -(Ct @ v), -(Ct @ (r - c * v)), -c


def b_jacobians(omega, alpha, dt):
    """Return (L, V) for the one-step factor B = M Exp(V u).

    ``omega`` and ``alpha`` are the bias-corrected inputs. ``V`` is the 9x6
    input map evaluated at the anchor and ``L`` the exact 9x6 Jacobian of the
    right perturbation of B with respect to ``[omega; alpha]``, including the
    dependence of ``V`` itself on ``omega``.
    """
    omega = np.asarray(omega, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    phi = omega * dt
    theta = math.sqrt(phi @ phi)
    k, dk = kappa(theta)
    W = skew(phi)
    half_dt2 = 0.5 * dt * dt
    V = np.zeros((9, 6))
    V[0:3, 0:3] = dt * np.eye(3)
    V[3:6, 3:6] = dt * np.eye(3)
    V[6:9, 3:6] = half_dt2 * (np.eye(3) + k * W)
    xi = np.concatenate((phi, dt * alpha, half_dt2 * (alpha + k * (W @ alpha))))
    dxi = V.copy()
    dxi[6:9, 0:3] = (half_dt2 * dt) * (-k * skew(alpha) + dk * np.outer(W @ alpha, phi))
    L = se23_left_jacobian(-xi) @ dxi
    return L, V
