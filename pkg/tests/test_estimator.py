"""Relative-pose filter: Jacobians, covariance hygiene, timing checks."""
import numpy as np
import pytest

from relpose.engine import run_filter
from relpose.estimator import (
    DesynchronizedRmi,
    FilterDivergence,
    FilterSettings,
    FilterState,
    RangeMeasurement,
    initial_state,
    nees,
    no_comm_jacobians,
    predict_no_comm,
    predict_synchronous,
    predicted_range,
    range_update,
    rmi_jacobians,
    state_error,
    update_on_rmi,
)
from relpose.lie import ExtendedPose, right_error, se23_exp
from relpose.preintegration import Rmi, preintegrate, rmi_append
from relpose.process import ImuSample, NoiseParams, make_B

from .conftest import central_jacobian, random_pose, rel_err

DT = 0.01
ZERO = np.zeros(3)
SETTINGS = FilterSettings()


def rand_u(rng):
    return ImuSample(0.0, rng.normal(0, 1, 3), rng.normal(0, 3, 3))


def rand_state(rng, c=0.0):
    T = random_pose(rng, 1.0, c)
    return FilterState(T, rng.normal(0, 0.01, 3), rng.normal(0, 0.1, 3), 1e-4 * np.eye(15))


def perturb(x, e):
    """Truth built from an error-state vector ``e`` around the estimate ``x``."""
    xi = se23_exp(e[0:9])
    return x.T @ xi, x.bias_gyr + e[9:12], x.bias_acc + e[12:15]


def error_after(x_next, T_true, bg_true, ba_true):
    return np.concatenate((right_error(x_next.T, T_true), bg_true - x_next.bias_gyr, ba_true - x_next.bias_acc))


def no_comm_fd(x, u):
    T_new, A, G = no_comm_jacobians(x, u, DT)
    x_next = FilterState(T_new, x.bias_gyr, x.bias_acc, x.P)

    def f_state(e):
        T, bg, ba = perturb(x, e)
        return error_after(x_next, make_B(u, bg, ba, DT).inverse() @ T, bg, ba)

    def f_noise(n):
        v = ImuSample(0, u.omega - n[0:3], u.alpha - n[3:6])
        return error_after(x_next, make_B(v, x.bias_gyr, x.bias_acc, DT).inverse() @ x.T, x.bias_gyr, x.bias_acc)

    return (rel_err(central_jacobian(f_state, np.zeros(15)), A),
            rel_err(central_jacobian(f_noise, np.zeros(6)), G))


def test_no_comm_jacobians(rng):
    for _ in range(25):
        x = rand_state(rng, c=-rng.uniform(0, 0.5))
        ea, eg = no_comm_fd(x, rand_u(rng))
        assert ea < 1e-5
        assert eg < 1e-5


def _rmi_setup(rng):
    samples = [rand_u(rng) for _ in range(5)]
    rmi = preintegrate(samples, np.zeros(3), NoiseParams(), DT)
    x = rand_state(rng, c=-(rmi.duration - DT))
    return x, rand_u(rng), rmi


def test_rmi_jacobians(rng):
    for _ in range(25):
        x, u, rmi = _rmi_setup(rng)
        T_new, A, G, W = rmi_jacobians(x, u, rmi, DT)
        x_next = FilterState(T_new, x.bias_gyr, x.bias_acc, x.P)

        def f_state(e):
            T, bg, ba = perturb(x, e)
            Tt = make_B(u, bg, ba, DT).inverse() @ T @ rmi.delta
            return error_after(x_next, Tt, bg, ba)

        def f_rmi(w):
            Tt = make_B(u, x.bias_gyr, x.bias_acc, DT).inverse() @ x.T @ rmi.delta @ se23_exp(w)
            return error_after(x_next, Tt, x.bias_gyr, x.bias_acc)

        assert abs(T_new.c) == 0.0
        assert rel_err(central_jacobian(f_state, np.zeros(15)), A) < 1e-5
        assert rel_err(central_jacobian(f_rmi, np.zeros(9)), W) < 1e-5


def test_rmi_append_transition(rng):
    # dw_{k+1} = Ad(B^-1) dw_k to first order when no new noise enters.
    for _ in range(20):
        rmi = preintegrate([rand_u(rng) for _ in range(3)], ZERO, NoiseParams(), DT)
        u = rand_u(rng)
        B = make_B(u, ZERO, None, DT)
        D1 = rmi.delta @ B
        f = lambda w: right_error(D1, rmi.delta @ se23_exp(w) @ B)  # noqa: E731
        assert rel_err(central_jacobian(f, np.zeros(9)), B.inverse().adjoint()) < 1e-5


def test_measurement_jacobian(rng):
    for _ in range(25):
        x = rand_state(rng)
        z = RangeMeasurement(0.0, 1.0, rng.normal(0, .5, 3), rng.normal(0, .5, 3), 0.05)
        _, H = predicted_range(x.T, z)
        f = lambda e: [predicted_range(perturb(x, e)[0], z)[0]]  # noqa: E731
        assert rel_err(central_jacobian(f, np.zeros(15)), H) < 1e-5


def test_range_update_joseph_form_stays_psd(rng):
    x = rand_state(rng)
    x = FilterState(x.T, x.bias_gyr, x.bias_acc, np.diag(rng.uniform(1e-4, 1e-1, 15)))
    for _ in range(50):
        rho, _ = predicted_range(x.T, z0 := RangeMeasurement(0, 1.0, rng.normal(0, .5, 3), rng.normal(0, .5, 3), 0.01))
        z = RangeMeasurement(0, rho + 0.001, z0.tag_0, z0.tag_i, 0.01)
        x1 = range_update(x, z, FilterSettings(gate_prob=None))
        np.testing.assert_array_equal(x1.P, x1.P.T)
        assert np.linalg.eigvalsh(x1.P)[0] > 0
        assert np.trace(x1.P) <= np.trace(x.P) + 1e-15
        x = x1


def test_range_gate_and_stats(rng):
    x = rand_state(rng)
    z = RangeMeasurement(0, 1e3, ZERO, ZERO + 0.1, 0.01)
    stats = {}
    assert range_update(x, z, SETTINGS, stats) is x
    assert stats == {"rejected": 1}
    rho, _ = predicted_range(x.T, z)
    range_update(x, RangeMeasurement(0, rho, ZERO, ZERO + 0.1, 0.01), SETTINGS, stats)
    assert stats["accepted"] == 1


def test_range_update_requires_synchronized_pose(rng):
    x = rand_state(rng, c=-0.02)
    with pytest.raises(DesynchronizedRmi):
        range_update(x, RangeMeasurement(0, 1.0, ZERO, ZERO, 0.1), SETTINGS)


def test_rmi_window_mismatch_raises(rng):
    x, u, rmi = _rmi_setup(rng)
    bad = FilterState(ExtendedPose(x.T.C, x.T.v, x.T.r, x.T.c - DT), x.bias_gyr, x.bias_acc, x.P)
    with pytest.raises(DesynchronizedRmi):
        update_on_rmi(bad, u, rmi, SETTINGS, DT)
    update_on_rmi(x, u, rmi, SETTINGS, DT)


def test_measurement_validation():
    with pytest.raises(ValueError):
        RangeMeasurement(0, -1.0, ZERO, ZERO, 0.1)
    with pytest.raises(ValueError):
        RangeMeasurement(0, 1.0, ZERO, ZERO, 0.0)


def test_time_entry_tracks_window(rng):
    x = rand_state(rng)
    s1 = []
    for k in range(4):
        u0, u1 = rand_u(rng), rand_u(rng)
        s1.append(u1)
        x = predict_no_comm(x, u0, SETTINGS, DT)
        assert x.elapsed == pytest.approx((k + 1) * DT, abs=1e-15)
    rmi = preintegrate(s1 + [rand_u(rng)], ZERO, NoiseParams(), DT)
    x = update_on_rmi(x, rand_u(rng), rmi, SETTINGS, DT)
    assert x.T.c == 0.0
    assert x.t == pytest.approx(5 * DT)


def test_zero_noise_propagation_is_exact(rng):
    # With perfect IMUs and exact biases the estimate follows the truth exactly.
    T = random_pose(rng)
    bg = rng.normal(0, 0.01, 3)
    x = initial_state(T, bg, ZERO, 0.01, 0.01, 0.01, 1e-3, 1e-2)
    imu0 = [rand_u(rng) for _ in range(40)]
    imu1 = [rand_u(rng) for _ in range(40)]
    meas0 = [ImuSample(u.t, u.omega + bg, u.alpha) for u in imu0]
    T_true = T
    for u0, u1 in zip(imu0, imu1):
        T_true = make_B(u0, ZERO, ZERO, DT).inverse() @ T_true @ make_B(u1, ZERO, None, DT)
    x = run_filter(x, meas0, imu1, DT, 10, SETTINGS, lambda k: (ZERO, np.zeros((3, 3))), lambda k: [])
    assert np.abs(state_error(x, T_true, bg, ZERO)).max() < 1e-11


def test_synchronous_oracle_matches_rmi_filter(rng):
    x0 = rand_state(rng)
    imu0 = [rand_u(rng) for _ in range(10)]
    imu1 = [rand_u(rng) for _ in range(10)]
    xs = x0
    for u0, u1 in zip(imu0, imu1):
        xs = predict_synchronous(xs, u0, u1, ZERO, SETTINGS, DT)
    xa = run_filter(x0, imu0, imu1, DT, 10, SETTINGS, lambda k: (ZERO, np.zeros((3, 3))), lambda k: [])
    assert xa.T.allclose(ExtendedPose(xs.T.C, xs.T.v, xs.T.r, 0.0), atol=1e-12)
    np.testing.assert_allclose(xa.P, xs.P, atol=1e-12)


def test_bias_disabled_freezes_bias_block(rng):
    x = initial_state(random_pose(rng), ZERO, ZERO, .1, .1, .1, .1, .1, estimate_bias=False)
    s = FilterSettings(estimate_bias=False)
    for _ in range(5):
        x = predict_no_comm(x, rand_u(rng), s, DT)
    assert np.all(x.P[9:, :] == 0) and np.all(x.P[:, 9:] == 0)


def test_long_run_covariance_symmetric_psd(rng):
    x = rand_state(rng)
    n = 10
    noise = NoiseParams()
    for w in range(30):
        rmi = Rmi.identity(w * n, 1e-8 * np.eye(3))
        for k in range(n):
            u0, u1 = rand_u(rng), rand_u(rng)
            rmi = rmi_append(rmi, u1, ZERO, noise, DT)
            if k < n - 1:
                x = predict_no_comm(x, u0, SETTINGS, DT)
        x = update_on_rmi(x, u0, rmi, SETTINGS, DT)
        z = RangeMeasurement(0, 1.0, rng.normal(0, .3, 3), rng.normal(0, .3, 3), 0.05)
        x = range_update(x, z, FilterSettings(gate_prob=None))
        np.testing.assert_array_equal(x.P, x.P.T)
        assert np.linalg.eigvalsh(x.P)[0] > 0


def test_nees_and_divergence(rng):
    x = rand_state(rng)
    e = rng.normal(0, 1e-2, 15)
    T, bg, ba = perturb(x, e)
    np.testing.assert_allclose(state_error(x, T, bg, ba), e, atol=1e-12)
    assert nees(x, T, bg, ba) == pytest.approx(e @ e / 1e-4, rel=1e-9)
    assert nees(x, T, bg, ba, dims=9) == pytest.approx(e[:9] @ e[:9] / 1e-4, rel=1e-9)
    bad = FilterState(x.T, x.bias_gyr, x.bias_acc, np.zeros((15, 15)))
    with pytest.raises(FilterDivergence):
        nees(bad, T, bg, ba)
