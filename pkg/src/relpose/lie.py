"""SO(3), SE_2(3) and DE_2(3) group operations.

DE_2(3) elements are 5x5 matrices ``[[C, v, r], [0, 1, c], [0, 0, 1]]``; SE_2(3)
is the subgroup with ``c = 0``. Algebra vectors are ordered
``xi = [phi, nu, rho]`` (attitude, velocity, position).
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels

# Tolerance on ||C^T C - I|| before a rotation is projected back onto SO(3).
ORTHO_TOL = 1e-9
# Angles closer than this to pi use the symmetric-part axis extraction.
NEAR_PI = 1e-3
SMALL_ANGLE = 1e-6

skew = kernels.skew
so3_exp = kernels.so3_exp
so3_left_jacobian = kernels.so3_left_jacobian
n_matrix = kernels.n_matrix
se23_left_jacobian = kernels.se23_left_jacobian


def vee3(W):
    return np.array([W[2, 1], W[0, 2], W[1, 0]])


def orthonormalize(C):
    """Nearest rotation matrix (polar decomposition via SVD)."""
    U, _, Vt = np.linalg.svd(C)
    R = U @ Vt
    if np.linalg.det(R) < 0.0:
        U[:, -1] *= -1.0
        R = U @ Vt
    return R


def so3_log(C):
    """Principal logarithm of a rotation matrix, ``||phi|| <= pi``."""
    C = np.asarray(C, dtype=float)
    w = 0.5 * vee3(C - C.T)
    s = math.sqrt(w @ w)
    c = 0.5 * (np.trace(C) - 1.0)
    theta = math.atan2(s, c)
    if theta < SMALL_ANGLE:
        t2 = theta * theta
        # theta / sin(theta)
        return w * (1.0 + t2 / 6.0 + 7.0 * t2 * t2 / 360.0)
    if math.pi - theta > NEAR_PI:
        return w * (theta / s)
    # Axis from the symmetric part: C + C^T - 2 cos(t) I = 2 (1 - cos t) n n^T.
    S = 0.5 * (C + C.T) - c * np.eye(3)
    i = int(np.argmax(np.diag(S)))
    n = S[:, i] / math.sqrt(S[i, i])
    n /= np.linalg.norm(n)
    if n @ w < 0.0:
        n = -n
    return theta * n


def so3_right_jacobian(phi):
    return so3_left_jacobian(-np.asarray(phi, dtype=float))


def hat(xi):
    """5x5 algebra matrix ``[[phi^, nu, rho], [0, 0, 0], [0, 0, 0]]``."""
    xi = np.asarray(xi, dtype=float)
    X = np.zeros((5, 5))
    X[0:3, 0:3] = skew(xi[0:3])
    X[0:3, 3] = xi[3:6]
    X[0:3, 4] = xi[6:9]
    return X


def vee(X):
    X = np.asarray(X)
    return np.concatenate((vee3(X[0:3, 0:3]), X[0:3, 3], X[0:3, 4]))


@dataclass(frozen=True, eq=False)
class ExtendedPose:
    """Element of DE_2(3), stored blockwise.

    ``C`` is the attitude, ``v`` and ``r`` the velocity and position columns
    and ``c`` the time entry in the (4, 5) slot.
    """

    C: np.ndarray
    v: np.ndarray
    r: np.ndarray
    c: float = 0.0

    @classmethod
    def identity(cls) -> ExtendedPose:
        return cls(np.eye(3), np.zeros(3), np.zeros(3), 0.0)

    @classmethod
    def from_matrix(cls, T) -> ExtendedPose:
        T = np.asarray(T, dtype=float)
        return cls(T[0:3, 0:3].copy(), T[0:3, 3].copy(), T[0:3, 4].copy(), float(T[3, 4]))

    def as_matrix(self) -> np.ndarray:
        T = np.eye(5)
        T[0:3, 0:3] = self.C
        T[0:3, 3] = self.v
        T[0:3, 4] = self.r
        T[3, 4] = self.c
        return T

    def __matmul__(self, other: ExtendedPose) -> ExtendedPose:
        return ExtendedPose(
            *kernels.de23_compose(
                self.C, self.v, self.r, self.c, other.C, other.v, other.r, other.c
            )
        )

    def inverse(self) -> ExtendedPose:
        return ExtendedPose(*kernels.de23_inverse(self.C, self.v, self.r, self.c))

    def adjoint(self) -> np.ndarray:
        return kernels.de23_adjoint(self.C, self.v, self.r, self.c)

    def normalized(self) -> ExtendedPose:
        """Re-orthonormalize ``C`` if it has drifted off SO(3)."""
        if np.abs(self.C.T @ self.C - np.eye(3)).max() > ORTHO_TOL:
            return ExtendedPose(orthonormalize(self.C), self.v, self.r, self.c)
        return self

    def allclose(self, other: ExtendedPose, atol: float = 1e-12) -> bool:
        return bool(np.allclose(self.as_matrix(), other.as_matrix(), rtol=0.0, atol=atol))

    def __repr__(self) -> str:
        return f"ExtendedPose(c={self.c!r},\n{self.as_matrix()!r})"


def se23_exp(xi) -> ExtendedPose:
    xi = np.asarray(xi, dtype=float)
    phi = xi[0:3]
    J = so3_left_jacobian(phi)
    return ExtendedPose(so3_exp(phi), J @ xi[3:6], J @ xi[6:9], 0.0)


def se23_log(T: ExtendedPose, atol: float = 1e-12) -> np.ndarray:
    """Logarithm of an SE_2(3) element; raises ``ValueError`` if ``c != 0``."""
    if abs(T.c) > atol:
        raise ValueError(f"se23_log needs an SE_2(3) element, got c={T.c!r}")
    phi = so3_log(T.C)
    J = so3_left_jacobian(phi)
    rhs = np.column_stack((T.v, T.r))
    nu_rho = np.linalg.solve(J, rhs)
    return np.concatenate((phi, nu_rho[:, 0], nu_rho[:, 1]))


def de23_adjoint(T: ExtendedPose) -> np.ndarray:
    return T.adjoint()


def m_matrix(dt: float) -> ExtendedPose:
    """Zero-input factor ``[[I, 0, 0], [0, 1, dt], [0, 0, 1]]``."""
    if dt < 0.0:
        raise ValueError("dt must be non-negative")
    return ExtendedPose(np.eye(3), np.zeros(3), np.zeros(3), float(dt))


def right_error(estimate: ExtendedPose, truth: ExtendedPose) -> np.ndarray:
    """``e`` such that ``truth = estimate @ se23_exp(e)`` (both with equal ``c``)."""
    D = estimate.inverse() @ truth
    return se23_log(ExtendedPose(D.C, D.v, D.r, 0.0) if abs(D.c) < 1e-9 else D)
