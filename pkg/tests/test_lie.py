"""Group structure of SO(3), SE_2(3) and DE_2(3)."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm, logm

from relpose.lie import (
    ExtendedPose,
    hat,
    m_matrix,
    orthonormalize,
    right_error,
    se23_exp,
    se23_left_jacobian,
    se23_log,
    skew,
    so3_exp,
    so3_log,
    vee,
)

from .conftest import central_jacobian, random_pose, rel_err

vec9 = arrays(np.float64, 9, elements=st.floats(-2.0, 2.0))
vec3 = arrays(np.float64, 3, elements=st.floats(-3.0, 3.0))
time_entry = st.floats(-1.0, 1.0)


def pose_from(xi, c=0.0):
    T = se23_exp(xi)
    return ExtendedPose(T.C, T.v, T.r, c)


@given(vec9, vec9, vec9, time_entry, time_entry, time_entry)
@settings(max_examples=60, deadline=None)
def test_product_is_matrix_product_and_associative(a, b, c, ca, cb, cc):
    A, B, C = pose_from(a, ca), pose_from(b, cb), pose_from(c, cc)
    np.testing.assert_allclose((A @ B).as_matrix(), A.as_matrix() @ B.as_matrix(), atol=1e-12)
    assert ((A @ B) @ C).allclose(A @ (B @ C), atol=1e-10)


@given(vec9, time_entry)
@settings(max_examples=60, deadline=None)
def test_inverse(a, c):
    A = pose_from(a, c)
    assert (A @ A.inverse()).allclose(ExtendedPose.identity(), atol=1e-12)
    np.testing.assert_allclose(A.inverse().as_matrix(), np.linalg.inv(A.as_matrix()), atol=1e-10)


@given(vec9, vec9, time_entry)
@settings(max_examples=60, deadline=None)
def test_adjoint_conjugates_algebra(a, xi, c):
    # X hat(xi) X^-1 = hat(Ad(X) xi); conjugation keeps the time generator out.
    X = pose_from(a, c)
    lhs = X.as_matrix() @ hat(xi) @ X.inverse().as_matrix()
    np.testing.assert_allclose(vee(lhs), X.adjoint() @ xi, atol=1e-10)


@given(vec9, vec9, time_entry, time_entry)
@settings(max_examples=40, deadline=None)
def test_adjoint_is_homomorphism(a, b, ca, cb):
    A, B = pose_from(a, ca), pose_from(b, cb)
    np.testing.assert_allclose((A @ B).adjoint(), A.adjoint() @ B.adjoint(), atol=1e-10)


@given(vec9)
@settings(max_examples=80, deadline=None)
def test_exp_matches_expm_and_log_inverts(xi):
    T = se23_exp(xi)
    np.testing.assert_allclose(T.as_matrix(), expm(hat(xi)), atol=1e-12)
    if np.linalg.norm(xi[0:3]) < np.pi - 1e-3:
        np.testing.assert_allclose(se23_log(T), xi, atol=1e-9)


@given(vec3)
@settings(max_examples=80, deadline=None)
def test_so3_log_round_trip(phi):
    theta = np.linalg.norm(phi)
    if theta >= np.pi:
        phi = phi * ((np.pi - 1e-4) / theta)
    np.testing.assert_allclose(so3_log(so3_exp(phi)), phi, atol=1e-9)


@pytest.mark.parametrize("eps", [0.0, 1e-9, 1e-6, 1e-4, 1e-2])
def test_so3_log_near_pi(rng, eps):
    for _ in range(20):
        n = rng.normal(size=3)
        n /= np.linalg.norm(n)
        theta = np.pi - eps
        phi = so3_log(so3_exp(theta * n))
        assert abs(np.linalg.norm(phi) - theta) < 1e-8
        np.testing.assert_allclose(so3_exp(phi), so3_exp(theta * n), atol=1e-9)


def test_so3_log_small_angles_match_logm(rng):
    for scale in (1e-12, 1e-8, 1e-6, 1e-3):
        phi = rng.normal(size=3) * scale
        C = so3_exp(phi)
        np.testing.assert_allclose(so3_log(C), phi, rtol=1e-8, atol=1e-20)
        np.testing.assert_allclose(skew(so3_log(C)), np.real(logm(C)), atol=1e-12)


def test_left_jacobian_defining_identity(rng):
    # Exp(xi + d) = Exp(J_l(xi) d) Exp(xi) to first order.
    worst = 0.0
    for _ in range(100):
        xi = rng.normal(0, 1.0, 9)
        X_inv = se23_exp(xi).inverse()
        fd = central_jacobian(lambda z: se23_log(se23_exp(z) @ X_inv), xi)
        worst = max(worst, rel_err(fd, se23_left_jacobian(xi)))
    assert worst < 1e-5


def test_se23_log_rejects_time_entry():
    T = ExtendedPose(np.eye(3), np.zeros(3), np.zeros(3), 0.5)
    with pytest.raises(ValueError):
        se23_log(T)


def test_m_matrix_and_time_entry():
    M = m_matrix(0.25)
    assert M.c == 0.25
    assert (M @ M.inverse()).allclose(ExtendedPose.identity())
    with pytest.raises(ValueError):
        m_matrix(-1.0)


def test_right_error_recovers_perturbation(rng):
    for _ in range(20):
        T = random_pose(rng)
        e = rng.normal(0, 0.3, 9)
        np.testing.assert_allclose(right_error(T, T @ se23_exp(e)), e, atol=1e-10)


def test_orthonormalize_projects_to_so3(rng):
    C = so3_exp(rng.normal(size=3)) + 1e-6 * rng.normal(size=(3, 3))
    R = orthonormalize(C)
    np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-14)
    assert np.linalg.det(R) > 0
    T = ExtendedPose(C, np.zeros(3), np.zeros(3)).normalized()
    np.testing.assert_allclose(T.C, R, atol=1e-14)
