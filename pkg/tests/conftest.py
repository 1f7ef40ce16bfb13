import numpy as np
import pytest

from relpose.lie import ExtendedPose, se23_exp, se23_log


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_pose(rng, scale=1.0, c=0.0):
    T = se23_exp(rng.normal(0.0, scale, 9))
    return ExtendedPose(T.C, T.v, T.r, c)


def log_sync(T: ExtendedPose) -> np.ndarray:
    """se23 log ignoring the time entry (used on differences with equal c)."""
    return se23_log(ExtendedPose(T.C, T.v, T.r, 0.0))


def central_jacobian(f, x0, h=1e-6):
    """Central finite-difference Jacobian of a vector function."""
    x0 = np.asarray(x0, dtype=float)
    f0 = np.asarray(f(x0))
    J = np.zeros((f0.size, x0.size))
    for j in range(x0.size):
        d = np.zeros_like(x0)
        d[j] = h
        J[:, j] = (np.asarray(f(x0 + d)) - np.asarray(f(x0 - d))) / (2.0 * h)
    return J


def rel_err(A, B):
    scale = max(np.linalg.norm(B), 1e-12)
    return float(np.linalg.norm(A - B) / scale)
