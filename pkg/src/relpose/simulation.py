"""Ground-truth trajectories, IMU synthesis and the Monte Carlo harness.

Robot motion is defined analytically (gravity-free kinematic acceleration),
sampled at the midpoint of every IMU interval and integrated exactly under a
zero-order hold, so the closed-form process model is exact for the true
inputs.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.stats import chi2

from .engine import run_filter
from .estimator import (
    FilterDivergence,
    FilterSettings,
    RangeMeasurement,
    initial_state,
    nees,
    state_error,
)
from .lie import ExtendedPose, se23_exp
from .process import ImuSample, NoiseParams, make_B

log = logging.getLogger(__name__)

TRAJECTORY_KINDS = ("circular", "lissajous", "static")
DIVERGENCE_NEES = 1e4


def _euler_to_C(yaw, pitch, roll):
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    Rz = np.array([[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]])
    Ry = np.array([[cp, 0.0, sp], [0.0, 1.0, 0.0], [-sp, 0.0, cp]])
    Rx = np.array([[1.0, 0.0, 0.0], [0.0, cr, -sr], [0.0, sr, cr]])
    return Rz @ Ry @ Rx


def _euler_rates_to_omega(pitch, roll, dyaw, dpitch, droll):
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    return np.array([
        droll - dyaw * sp,
        dpitch * cr + dyaw * sr * cp,
        -dpitch * sr + dyaw * cr * cp,
    ])


def _sin(amp, freq, phase, t):
    """Value, first and second derivative of ``amp sin(freq t + phase)``."""
    a = freq * t + phase
    return amp * math.sin(a), amp * freq * math.cos(a), -amp * freq * freq * math.sin(a)


@dataclass(frozen=True)
class AnalyticPath:
    """Smooth analytic motion of one robot.

    ``position`` holds per-axis (offset, [(amp, freq, phase), ...]) terms; the
    attitude angles are sums of sinusoids plus an optional linear yaw rate.
    """

    position: tuple
    yaw: tuple = ()
    yaw_rate: float = 0.0
    yaw0: float = 0.0
    pitch: tuple = ()
    roll: tuple = ()

    @staticmethod
    def _eval(terms, t):
        f = df = ddf = 0.0
        for amp, freq, phase in terms:
            a, b, c = _sin(amp, freq, phase, t)
            f += a
            df += b
            ddf += c
        return f, df, ddf

    def state(self, t: float):
        """Return ``(C, v, p, omega_body, alpha_body)`` at time ``t``."""
        p = np.zeros(3)
        v = np.zeros(3)
        a = np.zeros(3)
        for i, (offset, terms) in enumerate(self.position):
            f, df, ddf = self._eval(terms, t)
            p[i] = offset + f
            v[i] = df
            a[i] = ddf
        yaw, dyaw, _ = self._eval(self.yaw, t)
        yaw += self.yaw0 + self.yaw_rate * t
        dyaw += self.yaw_rate
        pitch, dpitch, _ = self._eval(self.pitch, t)
        roll, droll, _ = self._eval(self.roll, t)
        C = _euler_to_C(yaw, pitch, roll)
        omega = _euler_rates_to_omega(pitch, roll, dyaw, dpitch, droll)
        return C, v, p, omega, C.T @ a


def circular_path(radius=2.0, period=10.0, center=(0.0, 0.0), height=1.0, phase=0.0,
                  wobble=0.1) -> AnalyticPath:
    w = 2.0 * math.pi / period
    return AnalyticPath(
        position=(
            (center[0], ((radius, w, phase + 0.5 * math.pi),)),
            (center[1], ((radius, w, phase),)),
            (height, ()),
        ),
        yaw_rate=w,
        yaw0=phase + 0.5 * math.pi,
        pitch=((wobble, 0.7, 0.3),) if wobble else (),
        roll=((wobble, 0.9, 1.1),) if wobble else (),
    )


def robot_paths(kind: str, seed: int | None = None):
    """Analytic paths of robot 0 and its neighbour for a trajectory ``kind``."""
    if kind not in TRAJECTORY_KINDS:
        raise ValueError(f"unknown trajectory kind {kind!r}")
    rng = np.random.default_rng(seed) if seed is not None else None

    def jitter(x, scale=0.2):
        return x if rng is None else x + scale * rng.uniform(-1.0, 1.0)

    if kind == "static":
        return (
            AnalyticPath(position=((0.0, ()), (0.0, ()), (1.0, ()))),
            AnalyticPath(position=((3.0, ()), (1.0, ()), (1.5, ())), yaw0=0.5, pitch=((0.1, 0.0, 0.5 * math.pi),)),
        )
    if kind == "circular":
        return (
            circular_path(radius=2.0, period=jitter(20.0, 2.0), height=1.0, phase=jitter(0.0)),
            circular_path(radius=1.5, period=jitter(14.0, 2.0), center=(4.0, 1.0), height=1.5,
                          phase=jitter(1.0)),
        )
    return (
        AnalyticPath(
            position=(
                (0.0, ((2.0, 0.31, jitter(0.0)),)),
                (0.0, ((1.5, 0.47, jitter(0.4)),)),
                (1.0, ((0.3, 0.23, jitter(0.0)),)),
            ),
            yaw=((1.0, 0.2, jitter(0.0)), (0.3, 0.53, 0.2)),
            pitch=((0.15, 0.41, jitter(0.3)),),
            roll=((0.15, 0.37, jitter(1.0)),),
        ),
        AnalyticPath(
            position=(
                (4.0, ((1.5, 0.37, jitter(1.0)),)),
                (1.0, ((2.0, 0.29, jitter(0.2)),)),
                (1.5, ((0.4, 0.19, jitter(0.5)),)),
            ),
            yaw=((1.2, 0.17, jitter(2.0)), (0.25, 0.61, 0.7)),
            yaw0=0.3,
            pitch=((0.12, 0.33, jitter(0.1)),),
            roll=((0.18, 0.44, jitter(0.6)),),
        ),
    )


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Truth for both robots on the IMU grid.

    ``poses[m][k]`` is robot ``m``'s absolute extended pose at ``t[k]`` and
    ``omega[m, k]``, ``alpha[m, k]`` the true inputs held over
    ``[t[k], t[k+1])``.
    """

    t: np.ndarray
    poses: tuple
    omega: np.ndarray
    alpha: np.ndarray

    @property
    def dt(self) -> float:
        return float(self.t[1] - self.t[0])

    @property
    def steps(self) -> int:
        return len(self.t) - 1

    def relative_pose(self, k: int) -> ExtendedPose:
        return self.poses[0][k].inverse() @ self.poses[1][k]


def generate_trajectory(kind: str, duration: float, rate: float, seed: int | None = None) -> Trajectory:
    if not (duration > 0.0 and rate > 0.0):
        raise ValueError("duration and rate must be positive")
    n = int(round(duration * rate))
    dt = 1.0 / rate
    t = np.arange(n + 1) * dt
    paths = robot_paths(kind, seed)
    poses = []
    omega = np.zeros((2, n, 3))
    alpha = np.zeros((2, n, 3))
    for m, path in enumerate(paths):
        C, v, p, _, _ = path.state(0.0)
        X = ExtendedPose(C, v, p, 0.0)
        seq = [X]
        for k in range(n):
            _, _, _, w, a = path.state(t[k] + 0.5 * dt)
            omega[m, k] = w
            alpha[m, k] = a
            B = make_B(ImuSample(t[k], w, a), np.zeros(3), None, dt)
            # Absolute poses: X <- M(dt)^-1 X B, i.e. X B with the time entry reset.
            X = X @ B
            X = ExtendedPose(X.C, X.v, X.r, 0.0).normalized()
            seq.append(X)
        poses.append(tuple(seq))
    return Trajectory(t=t, poses=tuple(poses), omega=omega, alpha=alpha)


@dataclass(frozen=True, eq=False)
class ImuData:
    """Measured IMU streams and the true bias histories, shape (robot, step, 3)."""

    omega: np.ndarray
    alpha: np.ndarray
    bias_gyr: np.ndarray
    bias_acc: np.ndarray

    def sample(self, m: int, k: int, t: float) -> ImuSample:
        return ImuSample(t, self.omega[m, k], self.alpha[m, k])


def initial_biases(params: NoiseParams, duration: float, rng, scale: float = 5.0,
                   neighbour_accel_scale: float = 0.0):
    """Uniform initial biases within ``scale * sigma_rw * sqrt(duration)``.

    Returns ``(gyr, acc)`` arrays of shape (2, 3).
    """
    root = math.sqrt(duration)
    g = scale * params.sigma_gyr_rw * root
    a = np.array([scale, neighbour_accel_scale])[:, None] * params.sigma_acc_rw * root
    gyr = rng.uniform(-g, g, size=(2, 3))
    acc = rng.uniform(-1.0, 1.0, size=(2, 3)) * a
    return gyr, acc


def synthesize_imu(traj: Trajectory, params: NoiseParams, rng, bias_gyr0=None, bias_acc0=None,
                   walk_gyr=(True, True), walk_acc=(True, True)) -> ImuData:
    """Measurements ``truth + bias + white noise`` with random-walk biases.

    ``walk_gyr`` / ``walk_acc`` switch each robot's bias walk off (constant
    bias) without changing the random draws of the other streams.
    """
    n = traj.steps
    dt = traj.dt
    bg = np.zeros((2, n + 1, 3))
    ba = np.zeros((2, n + 1, 3))
    if bias_gyr0 is not None:
        bg[:, 0] = bias_gyr0
    if bias_acc0 is not None:
        ba[:, 0] = bias_acc0
    wg = rng.standard_normal((2, n, 3)) * params.sigma_gyr_rw
    wa = rng.standard_normal((2, n, 3)) * params.sigma_acc_rw
    wg *= np.asarray(walk_gyr, dtype=float)[:, None, None]
    wa *= np.asarray(walk_acc, dtype=float)[:, None, None]
    bg[:, 1:] = bg[:, :1] + dt * np.cumsum(wg, axis=1)
    ba[:, 1:] = ba[:, :1] + dt * np.cumsum(wa, axis=1)
    ng = rng.standard_normal((2, n, 3)) * params.sigma_gyr
    na = rng.standard_normal((2, n, 3)) * params.sigma_acc
    return ImuData(
        omega=traj.omega + bg[:, :n] + ng,
        alpha=traj.alpha + ba[:, :n] + na,
        bias_gyr=bg,
        bias_acc=ba,
    )


def corrupt_neighbour_bias(true_bias, sigma: float, rng):
    """Noisy copy of the neighbour's gyro bias and its covariance ``sigma^2 I``."""
    if sigma < 0.0:
        raise ValueError("sigma must be non-negative")
    true_bias = np.asarray(true_bias, dtype=float)
    est = true_bias + sigma * rng.standard_normal(3) if sigma > 0.0 else true_bias.copy()
    return est, sigma**2 * np.eye(3)


# --- trials -------------------------------------------------------------

DEFAULT_TAGS_0 = ((0.5, 0.0, 0.0), (-0.5, 0.1, 0.2), (0.0, 0.5, 0.0))
DEFAULT_TAGS_1 = ((0.4, 0.2, 0.0), (-0.4, -0.2, 0.2), (0.0, -0.4, 0.1))


@dataclass(frozen=True)
class InitSigmas:
    att: float = 0.02
    vel: float = 0.05
    pos: float = 0.1
    gyr_bias: float = 1e-3
    acc_bias: float = 0.05


@dataclass(frozen=True)
class SimConfig:
    trajectory: str = "lissajous"
    duration: float = 60.0
    noise: NoiseParams = NoiseParams()
    init: InitSigmas = InitSigmas()
    bias_estimation: bool = True
    # "sampled": estimate drawn from the prior around truth;
    # "zero_bias": same pose draw but biases start at zero;
    # "exact": estimate equals truth.
    init_mode: str = "sampled"
    bias_init_scale: float = 5.0
    neighbour_accel_bias_scale: float = 0.0
    # Truth bias random walks. The filter's process noise always uses the
    # configured walk stds.
    bias_walk: bool = True
    neighbour_accel_walk: bool = True
    tags_0: tuple = DEFAULT_TAGS_0
    tags_1: tuple = DEFAULT_TAGS_1
    gate_prob: float | None = 0.9973
    transient_fraction: float = 0.2
    randomize_trajectory: bool = False

    def __post_init__(self):
        if self.trajectory not in TRAJECTORY_KINDS:
            raise ValueError(f"unknown trajectory kind {self.trajectory!r}")
        if self.init_mode not in ("sampled", "zero_bias", "exact"):
            raise ValueError(f"unknown init_mode {self.init_mode!r}")
        if not self.duration > 0.0:
            raise ValueError("duration must be positive")

    def schedule(self):
        """Steps per RMI window and RMI windows per ranging epoch."""
        p = self.noise
        steps = p.rmi_period * p.imu_rate
        n_rmi = int(round(steps))
        if n_rmi < 1 or abs(steps - n_rmi) > 1e-9:
            raise ValueError("rmi_period must be a whole number of IMU periods")
        windows = 1.0 / (p.range_rate * p.rmi_period)
        n_rng = int(round(windows))
        if n_rng < 1 or abs(windows - n_rng) > 1e-9:
            raise ValueError("range epochs must coincide with RMI epochs "
                             "(1 / (range_rate * rmi_period) must be a positive integer)")
        return n_rmi, n_rng

    @property
    def settings(self) -> FilterSettings:
        return FilterSettings(noise=self.noise, estimate_bias=self.bias_estimation,
                              gate_prob=self.gate_prob)


@dataclass(eq=False)
class TrialResult:
    seed: tuple
    t: np.ndarray
    est_C: np.ndarray
    est_v: np.ndarray
    est_r: np.ndarray
    est_bias_gyr: np.ndarray
    est_bias_acc: np.ndarray
    P: np.ndarray
    error: np.ndarray
    nees: np.ndarray
    truth_abs: tuple
    truth_bias_gyr: np.ndarray
    truth_bias_acc: np.ndarray
    truth_rel_bias_acc: np.ndarray
    diverged: bool = False
    range_stats: dict = field(default_factory=dict)
    nees_dims: int = 15
    # Inputs actually fed to the filter, kept for log export.
    imu: ImuData | None = None
    imu_t: np.ndarray | None = None
    measurements: tuple = ()

    @property
    def position_rmse(self) -> float:
        e = self.error[:, 6:9]
        return float(np.sqrt(np.mean(np.sum(e * e, axis=1))))

    def post_transient(self, fraction: float) -> np.ndarray:
        return self.t >= self.t[0] + fraction * (self.t[-1] - self.t[0])


def _seed_sequence(seed):
    if isinstance(seed, np.random.SeedSequence):
        return seed
    return np.random.SeedSequence(seed)


def trial_seed(master_seed: int, trial_index: int) -> tuple:
    return (int(master_seed), int(trial_index))


def run_trial(config: SimConfig, seed) -> TrialResult:
    """Simulate one trial and run robot 0's filter over it. Deterministic in ``seed``."""
    ss = _seed_sequence(seed)
    rng_traj, rng_bias, rng_imu, rng_init, rng_nb, rng_range = (
        np.random.default_rng(s) for s in ss.spawn(6)
    )
    p = config.noise
    n_rmi, n_rng = config.schedule()
    settings = config.settings
    traj_seed = int(rng_traj.integers(2**31)) if config.randomize_trajectory else None
    traj = generate_trajectory(config.trajectory, config.duration, p.imu_rate, traj_seed)
    dt = traj.dt
    g0, a0 = initial_biases(p, config.duration, rng_bias, config.bias_init_scale,
                            config.neighbour_accel_bias_scale)
    w = config.bias_walk
    imu = synthesize_imu(traj, p, rng_imu, g0, a0, walk_gyr=(w, w),
                         walk_acc=(w, w and config.neighbour_accel_walk))

    def truth_at(k):
        T = traj.relative_pose(k)
        return T, imu.bias_gyr[0, k], imu.bias_acc[0, k] - T.C @ imu.bias_acc[1, k]

    sig = config.init
    T_true, bg_true, ba_true = truth_at(0)
    x = initial_state(T_true, bg_true, ba_true, sig.att, sig.vel, sig.pos, sig.gyr_bias,
                      sig.acc_bias, config.bias_estimation)
    if config.init_mode != "exact":
        e = rng_init.multivariate_normal(np.zeros(15), x.P)
        bg = bg_true - e[9:12]
        ba = ba_true - e[12:15]
        if config.init_mode == "zero_bias" or not config.bias_estimation:
            bg = np.zeros(3)
            ba = np.zeros(3)
        x = replace(x, T=T_true @ se23_exp(-e[0:9]), bias_gyr=bg, bias_acc=ba)

    tags_0 = [np.asarray(v, dtype=float) for v in config.tags_0]
    tags_1 = [np.asarray(v, dtype=float) for v in config.tags_1]
    dims = 15 if config.bias_estimation else 9
    # Noise-free ranges still need a finite filter-side std.
    sigma_range = p.sigma_range if p.sigma_range > 0.0 else 1e-3

    records = []
    stats: dict = {}
    diverged = False

    def record(k):
        nonlocal diverged
        T_true, bg_true, ba_true = truth_at(k)
        err = state_error(x, T_true, bg_true, ba_true)
        try:
            val = nees(x, T_true, bg_true, ba_true, dims)
        except FilterDivergence:
            val = math.inf
        if not val < DIVERGENCE_NEES:
            diverged = True
        records.append((k, x, err, val, ba_true))

    record(0)

    def neighbour_bias(k):
        return corrupt_neighbour_bias(imu.bias_gyr[1, k], p.sigma_neighbour_bias, rng_nb)

    fed = []

    def ranges(k):
        if (k // n_rmi) % n_rng:
            return []
        T_true = traj.relative_pose(k)
        out = []
        for ta in tags_0:
            for tb in tags_1:
                y = T_true.C @ tb + T_true.r - ta
                rho = float(np.linalg.norm(y)) + p.sigma_range * float(rng_range.standard_normal())
                out.append(RangeMeasurement(traj.t[k], max(rho, 0.0), ta, tb, sigma_range))
        fed.extend(out)
        return out

    def on_epoch(k, state):
        nonlocal x
        x = state
        record(k)

    imu0 = [imu.sample(0, k, traj.t[k]) for k in range(traj.steps)]
    imu1 = [imu.sample(1, k, traj.t[k]) for k in range(traj.steps)]
    run_filter(x, imu0, imu1, dt, n_rmi, settings, neighbour_bias, ranges, on_epoch, stats)

    ks = np.array([r[0] for r in records])
    states = [r[1] for r in records]
    return TrialResult(
        seed=tuple(ss.entropy) if isinstance(ss.entropy, (list, tuple)) else (ss.entropy,),
        t=traj.t[ks],
        est_C=np.array([s.T.C for s in states]),
        est_v=np.array([s.T.v for s in states]),
        est_r=np.array([s.T.r for s in states]),
        est_bias_gyr=np.array([s.bias_gyr for s in states]),
        est_bias_acc=np.array([s.bias_acc for s in states]),
        P=np.array([s.P for s in states]),
        error=np.array([r[2] for r in records]),
        nees=np.array([r[3] for r in records]),
        truth_abs=tuple(
            (np.array([traj.poses[m][k].C for k in ks]),
             np.array([traj.poses[m][k].v for k in ks]),
             np.array([traj.poses[m][k].r for k in ks]))
            for m in range(2)
        ),
        truth_bias_gyr=imu.bias_gyr[:, ks],
        truth_bias_acc=imu.bias_acc[:, ks],
        truth_rel_bias_acc=np.array([r[4] for r in records]),
        diverged=diverged,
        range_stats=stats,
        nees_dims=dims,
        imu=imu,
        imu_t=traj.t[:traj.steps],
        measurements=tuple(fed),
    )


def _run_indexed(args):
    config, seed = args
    return run_trial(config, seed)


def run_monte_carlo(config: SimConfig, trials: int, master_seed: int = 0, workers: int = 1):
    """Run ``trials`` independent trials; trial ``j`` uses seed ``(master_seed, j)``."""
    jobs = [(config, trial_seed(master_seed, j)) for j in range(trials)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_indexed, jobs))
    return [_run_indexed(j) for j in jobs]


def nees_bounds(dof: int, trials: int, prob: float = 0.95):
    """Interval containing the ``trials``-average NEES of a consistent filter."""
    lo = chi2.ppf(0.5 * (1.0 - prob), dof * trials) / trials
    hi = chi2.ppf(0.5 * (1.0 + prob), dof * trials) / trials
    return float(lo), float(hi)


@dataclass(frozen=True, eq=False)
class NeesSummary:
    t: np.ndarray
    average: np.ndarray
    lower: float
    upper: float
    post_transient: np.ndarray
    mean_post_transient: float
    fraction_inside: float

    @property
    def consistent(self) -> bool:
        return self.lower <= self.mean_post_transient <= self.upper


def summarize_nees(results, transient_fraction: float = 0.2, prob: float = 0.95) -> NeesSummary:
    dims = results[0].nees_dims
    t = results[0].t
    avg = np.mean(np.array([r.nees for r in results]), axis=0)
    lo, hi = nees_bounds(dims, len(results), prob)
    mask = results[0].post_transient(transient_fraction)
    inside = (avg[mask] >= lo) & (avg[mask] <= hi)
    return NeesSummary(
        t=t,
        average=avg,
        lower=lo,
        upper=hi,
        post_transient=mask,
        mean_post_transient=float(np.mean(avg[mask])),
        fraction_inside=float(np.mean(inside)),
    )
