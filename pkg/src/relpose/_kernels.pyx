# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled small-matrix kernels (SO(3), SE_2(3), DE_2(3)).

Same signatures and results as ``relpose._pykernels``; all arithmetic is on
fixed-size C arrays to avoid numpy call overhead in the filter loops.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sin, cos, sqrt

cnp.import_array()

SERIES_ANGLE = 0.1
BACKEND = "cython"

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

cdef double _SERIES = 0.1


cdef inline void _coeffs(double t, double* out) noexcept nogil:
    cdef double t2, t4, t6, t8, s, c, half, omc
    if t < _SERIES:
        t2 = t * t
        t4 = t2 * t2
        t6 = t4 * t2
        t8 = t4 * t4
        out[0] = 1.0 - t2 / 6.0 + t4 / 120.0 - t6 / 5040.0 + t8 / 362880.0
        out[1] = 0.5 - t2 / 24.0 + t4 / 720.0 - t6 / 40320.0 + t8 / 3628800.0
        out[2] = 1.0 / 6.0 - t2 / 120.0 + t4 / 5040.0 - t6 / 362880.0 + t8 / 39916800.0
        out[3] = 1.0 / 24.0 - t2 / 720.0 + t4 / 40320.0 - t6 / 3628800.0 + t8 / 479001600.0
        out[4] = 1.0 / 120.0 - t2 / 2520.0 + t4 / 120960.0 - t6 / 9979200.0 + t8 / 1245404160.0
        return
    s = sin(t)
    c = cos(t)
    half = sin(0.5 * t)
    omc = 2.0 * half * half
    t2 = t * t
    out[0] = s / t
    out[1] = omc / t2
    out[2] = (t - s) / (t2 * t)
    out[3] = (0.5 * t2 - omc) / (t2 * t2)
    out[4] = (2.0 * t - 3.0 * s + t * c) / (2.0 * t2 * t2 * t)


cdef inline void _kappa(double t, double* k, double* dk) noexcept nogil:
    cdef double t2, t4, t6, half, s, cot
    if t < _SERIES:
        t2 = t * t
        t4 = t2 * t2
        t6 = t4 * t2
        k[0] = -1.0 / 6.0 - t2 / 360.0 - t4 / 15120.0 - t6 / 604800.0 - t4 * t4 / 23950080.0
        dk[0] = -1.0 / 180.0 - t2 / 3780.0 - t4 / 100800.0 - t6 / 2993760.0
        return
    half = 0.5 * t
    s = sin(half)
    cot = cos(half) / s
    t2 = t * t
    k[0] = (t * cot - 2.0) / t2
    dk[0] = ((cot - t / (2.0 * s * s)) / t2 - 2.0 * (t * cot - 2.0) / (t2 * t)) / t


cdef inline void _skew(const double* x, double* W) noexcept nogil:
    W[0] = 0.0
    W[1] = -x[2]
    W[2] = x[1]
    W[3] = x[2]
    W[4] = 0.0
    W[5] = -x[0]
    W[6] = -x[1]
    W[7] = x[0]
    W[8] = 0.0


cdef inline void _mm3(const double* A, const double* B, double* out) noexcept nogil:
    cdef int i, j
    for i in range(3):
        for j in range(3):
            out[3 * i + j] = (A[3 * i] * B[j] + A[3 * i + 1] * B[3 + j]
                              + A[3 * i + 2] * B[6 + j])


cdef inline void _mv3(const double* A, const double* x, double* out) noexcept nogil:
    cdef int i
    for i in range(3):
        out[i] = A[3 * i] * x[0] + A[3 * i + 1] * x[1] + A[3 * i + 2] * x[2]


cdef inline void _poly(double c0, double c1, const double* W, double c2,
                       const double* WW, double* out) noexcept nogil:
    # out = c0 I + c1 W + c2 WW
    cdef int i
    for i in range(9):
        out[i] = c1 * W[i] + c2 * WW[i]
    out[0] += c0
    out[4] += c0
    out[8] += c0


cdef inline double _norm3(const double* x) noexcept nogil:
    return sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])


cdef void _qmat(const double* phi, const double* rho, const double* cf,
                double* out) noexcept nogil:
    cdef double P[9]
    cdef double R[9]
    cdef double PR[9]
    cdef double RP[9]
    cdef double PRP[9]
    cdef double PPR[9]
    cdef double RPP[9]
    cdef double PRPP[9]
    cdef double PPRP[9]
    cdef int i
    _skew(phi, P)
    _skew(rho, R)
    _mm3(P, R, PR)
    _mm3(R, P, RP)
    _mm3(PR, P, PRP)
    _mm3(P, PR, PPR)
    _mm3(RP, P, RPP)
    _mm3(PRP, P, PRPP)
    _mm3(P, PRP, PPRP)
    for i in range(9):
        out[i] = (0.5 * R[i] + cf[2] * (PR[i] + RP[i] + PRP[i])
                  + cf[3] * (PPR[i] + RPP[i] - 3.0 * PRP[i])
                  + cf[4] * (PRPP[i] + PPRP[i]))


cdef void _se23_jl(const double* xi, double* out) noexcept nogil:
    # out is a 9x9 row-major buffer
    cdef double cf[5]
    cdef double W[9]
    cdef double WW[9]
    cdef double J[9]
    cdef double Q[9]
    cdef int i, j, b
    _coeffs(_norm3(xi), cf)
    _skew(xi, W)
    _mm3(W, W, WW)
    _poly(1.0, cf[1], W, cf[2], WW, J)
    for i in range(81):
        out[i] = 0.0
    for b in range(3):
        for i in range(3):
            for j in range(3):
                out[9 * (3 * b + i) + 3 * b + j] = J[3 * i + j]
    _qmat(xi, xi + 3, cf, Q)
    for i in range(3):
        for j in range(3):
            out[9 * (3 + i) + j] = Q[3 * i + j]
    _qmat(xi, xi + 6, cf, Q)
    for i in range(3):
        for j in range(3):
            out[9 * (6 + i) + j] = Q[3 * i + j]


cdef inline void _load3(object x, double* out):
    cdef const double[::1] mv = np.ascontiguousarray(x, dtype=np.float64)
    out[0] = mv[0]
    out[1] = mv[1]
    out[2] = mv[2]


cdef inline void _load9(object x, double* out):
    cdef const double[::1] mv = np.ascontiguousarray(x, dtype=np.float64).reshape(-1)
    cdef int i
    for i in range(9):
        out[i] = mv[i]


cdef inline object _mat3(const double* a):
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((3, 3))
    cdef double* p = <double*> out.data
    cdef int i
    for i in range(9):
        p[i] = a[i]
    return out


cdef inline object _vec3(const double* a):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(3)
    cdef double* p = <double*> out.data
    p[0] = a[0]
    p[1] = a[1]
    p[2] = a[2]
    return out


def skew(x):
    cdef double v[3]
    cdef double W[9]
    _load3(x, v)
    _skew(v, W)
    return _mat3(W)


def coefficients(double theta):
    cdef double cf[5]
    _coeffs(theta, cf)
    return (cf[0], cf[1], cf[2], cf[3], cf[4])


def kappa(double theta):
    cdef double k, dk
    _kappa(theta, &k, &dk)
    return (k, dk)


def so3_exp(phi):
    cdef double p[3]
    cdef double cf[5]
    cdef double W[9]
    cdef double WW[9]
    cdef double C[9]
    _load3(phi, p)
    _coeffs(_norm3(p), cf)
    _skew(p, W)
    _mm3(W, W, WW)
    _poly(1.0, cf[0], W, cf[1], WW, C)
    return _mat3(C)


def so3_left_jacobian(phi):
    cdef double p[3]
    cdef double cf[5]
    cdef double W[9]
    cdef double WW[9]
    cdef double J[9]
    _load3(phi, p)
    _coeffs(_norm3(p), cf)
    _skew(p, W)
    _mm3(W, W, WW)
    _poly(1.0, cf[1], W, cf[2], WW, J)
    return _mat3(J)


def n_matrix(phi):
    cdef double p[3]
    cdef double cf[5]
    cdef double W[9]
    cdef double WW[9]
    cdef double N[9]
    _load3(phi, p)
    _coeffs(_norm3(p), cf)
    _skew(p, W)
    _mm3(W, W, WW)
    _poly(1.0, 2.0 * cf[2], W, 2.0 * cf[3], WW, N)
    return _mat3(N)


def q_matrix(phi, rho):
    cdef double p[3]
    cdef double r[3]
    cdef double cf[5]
    cdef double Q[9]
    _load3(phi, p)
    _load3(rho, r)
    _coeffs(_norm3(p), cf)
    _qmat(p, r, cf, Q)
    return _mat3(Q)


def se23_left_jacobian(xi):
    cdef const double[::1] mv = np.ascontiguousarray(xi, dtype=np.float64)
    cdef double x[9]
    cdef int i
    for i in range(9):
        x[i] = mv[i]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.empty((9, 9))
    _se23_jl(x, <double*> out.data)
    return out


def b_blocks(omega, alpha, double dt):
    cdef double w[3]
    cdef double a[3]
    cdef double p[3]
    cdef double cf[5]
    cdef double W[9]
    cdef double WW[9]
    cdef double M[9]
    cdef double C[9]
    cdef double v[3]
    cdef double r[3]
    cdef int i
    _load3(omega, w)
    _load3(alpha, a)
    for i in range(3):
        p[i] = w[i] * dt
    _coeffs(_norm3(p), cf)
    _skew(p, W)
    _mm3(W, W, WW)
    _poly(1.0, cf[0], W, cf[1], WW, C)
    _poly(1.0, cf[1], W, cf[2], WW, M)
    _mv3(M, a, v)
    _poly(1.0, 2.0 * cf[2], W, 2.0 * cf[3], WW, M)
    _mv3(M, a, r)
    for i in range(3):
        v[i] *= dt
        r[i] *= 0.5 * dt * dt
    return _mat3(C), _vec3(v), _vec3(r)


def b_jacobians(omega, alpha, double dt):
    cdef double w[3]
    cdef double a[3]
    cdef double p[3]
    cdef double W[9]
    cdef double A[9]
    cdef double Wa[3]
    cdef double xi[9]
    cdef double Jl[81]
    cdef double k, dk, h2, h3
    cdef int i, j, m
    _load3(omega, w)
    _load3(alpha, a)
    for i in range(3):
        p[i] = w[i] * dt
    _kappa(_norm3(p), &k, &dk)
    _skew(p, W)
    _skew(a, A)
    _mv3(W, a, Wa)
    h2 = 0.5 * dt * dt
    h3 = h2 * dt
    cdef cnp.ndarray[cnp.float64_t, ndim=2] V = np.zeros((9, 6))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] D = np.zeros((9, 6))
    cdef cnp.ndarray[cnp.float64_t, ndim=2] L = np.empty((9, 6))
    cdef double* pv = <double*> V.data
    cdef double* pd = <double*> D.data
    cdef double* pl = <double*> L.data
    for i in range(3):
        pv[6 * i + i] = dt
        pv[6 * (3 + i) + 3 + i] = dt
        for j in range(3):
            pv[6 * (6 + i) + 3 + j] = h2 * k * W[3 * i + j]
        pv[6 * (6 + i) + 3 + i] += h2
    for i in range(54):
        pd[i] = pv[i]
    for i in range(3):
        for j in range(3):
            pd[6 * (6 + i) + j] = h3 * (-k * A[3 * i + j] + dk * Wa[i] * p[j])
    for i in range(3):
        xi[i] = -p[i]
        xi[3 + i] = -dt * a[i]
        xi[6 + i] = -h2 * (a[i] + k * Wa[i])
    _se23_jl(xi, Jl)
    for i in range(9):
        for j in range(6):
            pl[6 * i + j] = 0.0
            for m in range(9):
                pl[6 * i + j] += Jl[9 * i + m] * pd[6 * m + j]
    return L, V


def de23_adjoint(C, v, r, double c):
    cdef double Cm[9]
    cdef double vv[3]
    cdef double rr[3]
    cdef double S[9]
    cdef double SC[9]
    cdef double u[3]
    cdef int i, j, b
    _load9(C, Cm)
    _load3(v, vv)
    _load3(r, rr)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros((9, 9))
    cdef double* po = <double*> out.data
    for b in range(3):
        for i in range(3):
            for j in range(3):
                po[9 * (3 * b + i) + 3 * b + j] = Cm[3 * i + j]
    _skew(vv, S)
    _mm3(S, Cm, SC)
    for i in range(3):
        for j in range(3):
            po[9 * (3 + i) + j] = SC[3 * i + j]
            po[9 * (6 + i) + 3 + j] = -c * Cm[3 * i + j]
    for i in range(3):
        u[i] = rr[i] - c * vv[i]
    _skew(u, S)
    _mm3(S, Cm, SC)
    for i in range(3):
        for j in range(3):
            po[9 * (6 + i) + j] = SC[3 * i + j]
    return out


def de23_compose(C1, v1, r1, double c1, C2, v2, r2, double c2):
    cdef double A[9]
    cdef double B[9]
    cdef double a1[3]
    cdef double a2[3]
    cdef double b1[3]
    cdef double b2[3]
    cdef double C[9]
    cdef double v[3]
    cdef double r[3]
    cdef int i
    _load9(C1, A)
    _load9(C2, B)
    _load3(v1, a1)
    _load3(r1, b1)
    _load3(v2, a2)
    _load3(r2, b2)
    _mm3(A, B, C)
    _mv3(A, a2, v)
    _mv3(A, b2, r)
    for i in range(3):
        v[i] += a1[i]
        r[i] += c2 * a1[i] + b1[i]
    return _mat3(C), _vec3(v), _vec3(r), c1 + c2


def de23_inverse(C, v, r, double c):
    cdef double A[9]
    cdef double At[9]
    cdef double vv[3]
    cdef double rr[3]
    cdef double u[3]
    cdef double ov[3]
    cdef double orr[3]
    cdef int i, j
    _load9(C, A)
    _load3(v, vv)
    _load3(r, rr)
    for i in range(3):
        for j in range(3):
            At[3 * i + j] = A[3 * j + i]
    for i in range(3):
        u[i] = rr[i] - c * vv[i]
    _mv3(At, vv, ov)
    _mv3(At, u, orr)
    for i in range(3):
        ov[i] = -ov[i]
        orr[i] = -orr[i]
    return _mat3(At), _vec3(ov), _vec3(orr), -c
