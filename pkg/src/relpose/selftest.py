"""Quick oracle checks run by ``relpose selftest``."""
from __future__ import annotations

import numpy as np
from scipy.linalg import expm

from . import kernels
from .estimator import FilterSettings, initial_state, predict_no_comm, predict_synchronous, update_on_rmi
from .lie import ExtendedPose, se23_exp, se23_log, skew
from .preintegration import Rmi, rmi_append
from .process import ImuSample, NoiseParams, linearize_B, make_B
from .simulation import SimConfig, run_trial


def generator(omega, alpha) -> np.ndarray:
    """5x5 generator whose exponential over ``dt`` is one IMU factor."""
    U = np.zeros((5, 5))
    U[0:3, 0:3] = skew(omega)
    U[0:3, 3] = alpha
    U[3, 4] = 1.0
    return U


def check_expm(rng, draws=200):
    worst = 0.0
    for _ in range(draws):
        u = ImuSample(0.0, rng.normal(0, 2, 3), rng.normal(0, 5, 3))
        dt = rng.uniform(1e-3, 0.2)
        B = make_B(u, np.zeros(3), np.zeros(3), dt).as_matrix()
        worst = max(worst, np.abs(B - expm(generator(u.omega, u.alpha) * dt)).max())
    return worst < 1e-10, f"max |B - expm| = {worst:.2e}"


def check_input_jacobian(rng, draws=50, h=1e-6):
    worst = 0.0
    for _ in range(draws):
        u = ImuSample(0.0, rng.normal(0, 1, 3), rng.normal(0, 3, 3))
        dt = rng.uniform(0.005, 0.05)
        L = linearize_B(u, np.zeros(3), np.zeros(3), dt).L
        B = make_B(u, np.zeros(3), np.zeros(3), dt)
        Binv = B.inverse()
        fd = np.zeros((9, 6))
        for j in range(6):
            d = np.zeros(6)
            d[j] = h
            lo = ImuSample(0.0, u.omega - d[:3], u.alpha - d[3:])
            hi = ImuSample(0.0, u.omega + d[:3], u.alpha + d[3:])
            plus = Binv @ make_B(hi, np.zeros(3), np.zeros(3), dt)
            minus = Binv @ make_B(lo, np.zeros(3), np.zeros(3), dt)
            fd[:, j] = (se23_log(_sync(plus)) - se23_log(_sync(minus))) / (2 * h)
        worst = max(worst, np.abs(fd - L).max() / np.abs(L).max())
    return worst < 1e-5, f"max relative FD error = {worst:.2e}"


def _sync(T: ExtendedPose) -> ExtendedPose:
    return ExtendedPose(T.C, T.v, T.r, 0.0)


def check_sync_equivalence(rng, steps=10):
    noise = NoiseParams()
    settings = FilterSettings(noise=noise, gate_prob=None)
    dt = noise.dt
    T0 = se23_exp(rng.normal(0, 0.5, 9))
    x = initial_state(T0, rng.normal(0, 1e-3, 3), rng.normal(0, 1e-2, 3), 0.05, 0.1, 0.3, 1e-3, 5e-2)
    bi = rng.normal(0, 1e-3, 3)
    cov_i = 1e-8 * np.eye(3)
    us0 = [ImuSample(0.0, rng.normal(0, 1, 3), rng.normal(0, 2, 3)) for _ in range(steps)]
    usi = [ImuSample(0.0, rng.normal(0, 1, 3), rng.normal(0, 2, 3)) for _ in range(steps)]
    xs = x
    for u0, ui in zip(us0, usi):
        xs = predict_synchronous(xs, u0, ui, bi, settings, dt, cov_i)
    rmi = Rmi.identity(0, cov_i)
    xa = x
    for k, (u0, ui) in enumerate(zip(us0, usi)):
        rmi = rmi_append(rmi, ui, bi, noise, dt)
        xa = predict_no_comm(xa, u0, settings, dt) if k < steps - 1 else update_on_rmi(xa, u0, rmi, settings, dt)
    dm = np.abs(xa.T.as_matrix() - _sync(xs.T).as_matrix()).max()
    return dm < 1e-12, f"mean mismatch {dm:.2e} over {steps} steps"


def check_backend():
    return True, f"kernel backend: {kernels.BACKEND}"


def check_zero_noise():
    z = NoiseParams(sigma_gyr=0, sigma_acc=0, sigma_gyr_rw=0, sigma_acc_rw=0, sigma_range=0,
                    sigma_neighbour_bias=0)
    r = run_trial(SimConfig(noise=z, init_mode="exact", duration=5.0), (0, 0))
    return r.position_rmse < 1e-6, f"zero-noise position RMSE {r.position_rmse:.2e} m"


CHECKS = {
    "closed-form factor vs expm": check_expm,
    "input Jacobian vs finite differences": check_input_jacobian,
    "RMI vs synchronous propagation": check_sync_equivalence,
}


def run(seed: int = 0, out=print) -> bool:
    rng = np.random.default_rng(seed)
    ok_all = True
    for name, fn in CHECKS.items():
        ok, detail = fn(rng)
        ok_all &= ok
        out(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    for name, fn in (("backend", check_backend), ("zero-noise trial", check_zero_noise)):
        ok, detail = fn()
        ok_all &= ok
        out(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
    return ok_all
