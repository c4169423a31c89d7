"""Allocation-free scalar kernels for the fixed-step integrators (private).

The public API works on numpy arrays, but a single observer step touches
dozens of 3-vectors, and per-call numpy overhead dominates the runtime at
desk scale. These kernels carry vectors as (x, y, z) float tuples and
rotation matrices as row-major 9-tuples; the public modules convert at
the boundary only. Formulas mirror :mod:`velaid.so3` and
:mod:`velaid.observers`; the test suite asserts the equivalence of the
two routes on random inputs.
"""

from __future__ import annotations

import math

import numpy as np

# rotation-vector norm below which the exponential switches to its series
EXP_EPS2 = 1e-24

I9 = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0)


def t3(a) -> tuple:
    return (float(a[0]), float(a[1]), float(a[2]))


def t9(M) -> tuple:
    return (
        float(M[0, 0]), float(M[0, 1]), float(M[0, 2]),
        float(M[1, 0]), float(M[1, 1]), float(M[1, 2]),
        float(M[2, 0]), float(M[2, 1]), float(M[2, 2]),
    )


def a3(t) -> np.ndarray:
    return np.array(t)


def a9(t) -> np.ndarray:
    return np.array(t).reshape(3, 3)


def add(a, b):
    return (a[0] + b[0], a[1] + b[1], a[2] + b[2])


def sub(a, b):
    return (a[0] - b[0], a[1] - b[1], a[2] - b[2])


def scale(s, a):
    return (s * a[0], s * a[1], s * a[2])


def axpy(s, x, y):
    """s*x + y."""
    return (s * x[0] + y[0], s * x[1] + y[1], s * x[2] + y[2])


def dot(a, b) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def norm(a) -> float:
    return math.sqrt(a[0] * a[0] + a[1] * a[1] + a[2] * a[2])


def cross(a, b):
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def mat_vec(M, v):
    return (
        M[0] * v[0] + M[1] * v[1] + M[2] * v[2],
        M[3] * v[0] + M[4] * v[1] + M[5] * v[2],
        M[6] * v[0] + M[7] * v[1] + M[8] * v[2],
    )


def mat_T_vec(M, v):
    return (
        M[0] * v[0] + M[3] * v[1] + M[6] * v[2],
        M[1] * v[0] + M[4] * v[1] + M[7] * v[2],
        M[2] * v[0] + M[5] * v[1] + M[8] * v[2],
    )


def mat_mul(A, B):
    return (
        A[0] * B[0] + A[1] * B[3] + A[2] * B[6],
        A[0] * B[1] + A[1] * B[4] + A[2] * B[7],
        A[0] * B[2] + A[1] * B[5] + A[2] * B[8],
        A[3] * B[0] + A[4] * B[3] + A[5] * B[6],
        A[3] * B[1] + A[4] * B[4] + A[5] * B[7],
        A[3] * B[2] + A[4] * B[5] + A[5] * B[8],
        A[6] * B[0] + A[7] * B[3] + A[8] * B[6],
        A[6] * B[1] + A[7] * B[4] + A[8] * B[7],
        A[6] * B[2] + A[7] * B[5] + A[8] * B[8],
    )


def mat_mul_bt(A, B):
    """A @ B^T."""
    return (
        A[0] * B[0] + A[1] * B[1] + A[2] * B[2],
        A[0] * B[3] + A[1] * B[4] + A[2] * B[5],
        A[0] * B[6] + A[1] * B[7] + A[2] * B[8],
        A[3] * B[0] + A[4] * B[1] + A[5] * B[2],
        A[3] * B[3] + A[4] * B[4] + A[5] * B[5],
        A[3] * B[6] + A[4] * B[7] + A[5] * B[8],
        A[6] * B[0] + A[7] * B[1] + A[8] * B[2],
        A[6] * B[3] + A[7] * B[4] + A[8] * B[5],
        A[6] * B[6] + A[7] * B[7] + A[8] * B[8],
    )


def trace_mul_bt(A, B) -> float:
    """trace(A @ B^T) = elementwise sum of A*B."""
    return (
        A[0] * B[0] + A[1] * B[1] + A[2] * B[2]
        + A[3] * B[3] + A[4] * B[4] + A[5] * B[5]
        + A[6] * B[6] + A[7] * B[7] + A[8] * B[8]
    )


def row3(M):
    """Third row, i.e. M^T e3."""
    return (M[6], M[7], M[8])


def col3(M):
    """Third column, i.e. M e3."""
    return (M[2], M[5], M[8])


def expm(u):
    """Rodrigues rotation matrix of a rotation-vector 3-tuple."""
    x, y, z = u
    t2 = x * x + y * y + z * z
    if t2 < EXP_EPS2:
        return (1.0, -z, y, z, 1.0, -x, -y, x, 1.0)
    t = math.sqrt(t2)
    a = math.sin(t) / t
    b = (1.0 - math.cos(t)) / t2
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    return (
        1.0 - b * (yy + zz), b * xy - a * z, b * xz + a * y,
        b * xy + a * z, 1.0 - b * (xx + zz), b * yz - a * x,
        b * xz - a * y, b * yz + a * x, 1.0 - b * (xx + yy),
    )


def rot_apply(u, v):
    """expm(u) @ v without building the matrix."""
    x, y, z = u
    t2 = x * x + y * y + z * z
    if t2 < EXP_EPS2:
        a, b = 1.0, 0.5
    else:
        t = math.sqrt(t2)
        a = math.sin(t) / t
        b = (1.0 - math.cos(t)) / t2
    c0 = y * v[2] - z * v[1]
    c1 = z * v[0] - x * v[2]
    c2 = x * v[1] - y * v[0]
    d0 = y * c2 - z * c1
    d1 = z * c0 - x * c2
    d2 = x * c1 - y * c0
    return (v[0] + a * c0 + b * d0, v[1] + a * c1 + b * d1, v[2] + a * c2 + b * d2)


def frobenius_defect(R) -> float:
    """Frobenius norm of R^T R - I for a 9-tuple rotation."""
    G = mat_mul_bt(
        (R[0], R[3], R[6], R[1], R[4], R[7], R[2], R[5], R[8]),  # R^T
        (R[0], R[3], R[6], R[1], R[4], R[7], R[2], R[5], R[8]),
    )
    s = 0.0
    for i, gi in enumerate(G):
        d = gi - (1.0 if i in (0, 4, 8) else 0.0)
        s += d * d
    return math.sqrt(s)


def rotation_angle9(R) -> float:
    c = 0.5 * (R[0] + R[4] + R[8] - 1.0)
    return math.acos(min(1.0, max(-1.0, c)))


# ---------------------------------------------------------------------------
# observer step kernels


def innovation(vt, gh, m_B, m_hat, k1v, k2v, k1r, k2r, variant):
    """(sigma_v, sigma_R) from velocity error vt and gravity direction gh."""
    gxv = cross(gh, vt)
    sv = axpy(-k2v, cross(gh, gxv), scale(k1v, vt))
    if variant == 2:
        sv = axpy(k1r, cross(vt, gxv), sv)
    c = dot(cross(m_B, m_hat), gh)
    sR = axpy(k2r * c, gh, scale(-k1r, gxv))
    return sv, sR


def innovation_gamma(vt, gh, k1v, k2v, k1r, variant):
    """Reduced-observer innovations; no magnetometer term at all."""
    gxv = cross(gh, vt)
    sv = axpy(-k2v, cross(gh, gxv), scale(k1v, vt))
    if variant == 2:
        sv = axpy(k1r, cross(vt, gxv), sv)
    return sv, scale(-k1r, gxv)


def step_full(v, R, w, a_B, m_B, v_meas, m_I, k1v, k2v, k1r, k2r, g, dt, variant):
    """RK4 velocity / midpoint-exponential attitude step (9-tuple R)."""
    half = 0.5 * dt

    def f(vv, RR):
        gh = row3(RR)
        sv, sR = innovation(
            sub(v_meas, vv), gh, m_B, mat_T_vec(RR, m_I), k1v, k2v, k1r, k2r, variant
        )
        vd = add(add(cross(vv, w), a_B), axpy(g, gh, sv))
        return vd, sR

    k1, sR1 = f(v, R)
    R_mid = mat_mul(R, expm(scale(half, add(w, sR1))))
    k2, sR2 = f(axpy(half, k1, v), R_mid)
    R_mid = mat_mul(R, expm(scale(half, add(w, sR2))))
    k3, sR3 = f(axpy(half, k2, v), R_mid)
    R1 = mat_mul(R, expm(scale(dt, add(w, sR3))))
    k4, _ = f(axpy(dt, k3, v), R1)
    v1 = (
        v[0] + (dt / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        v[1] + (dt / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        v[2] + (dt / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    )
    return v1, R1


def step_gamma(v, gh0, w, a_B, v_meas, k1v, k2v, k1r, g, dt, variant):
    """Reduced-observer step; the direction estimate stays unit by
    construction and the magnetometer channel is never consulted."""
    half = 0.5 * dt

    def f(vv, gh):
        sv, sR = innovation_gamma(sub(v_meas, vv), gh, k1v, k2v, k1r, variant)
        vd = add(add(cross(vv, w), a_B), axpy(g, gh, sv))
        return vd, sR

    k1, sR1 = f(v, gh0)
    g_mid = rot_apply(scale(-half, add(w, sR1)), gh0)
    k2, sR2 = f(axpy(half, k1, v), g_mid)
    g_mid = rot_apply(scale(-half, add(w, sR2)), gh0)
    k3, sR3 = f(axpy(half, k2, v), g_mid)
    g1 = rot_apply(scale(-dt, add(w, sR3)), gh0)
    k4, _ = f(axpy(dt, k3, v), g1)
    v1 = (
        v[0] + (dt / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        v[1] + (dt / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        v[2] + (dt / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    )
    n = norm(g1)
    return v1, (g1[0] / n, g1[1] / n, g1[2] / n)


# ---------------------------------------------------------------------------
# autonomous error-system step kernels


def error_field_full(v, R, m_I, k1v, k2v, k1r, k2r, g, variant):
    """(dv_bar/dt, s) with dR_bar/dt = -[s]_x R_bar."""
    gm = col3(R)
    gxv = cross(gm, v)
    sv = axpy(-k2v, cross(gm, gxv), scale(k1v, v))
    if variant == 2:
        sv = axpy(k1r, cross(v, gxv), sv)
    vd = sub(scale(g, sub((0.0, 0.0, 1.0), gm)), sv)
    c = dot(cross(m_I, mat_vec(R, m_I)), gm)
    sR = axpy(k2r * c, gm, scale(-k1r, gxv))
    return vd, sR


def step_error_full(v, R, m_I, k1v, k2v, k1r, k2r, g, dt, variant):
    half = 0.5 * dt
    k1, s1 = error_field_full(v, R, m_I, k1v, k2v, k1r, k2r, g, variant)
    R_mid = mat_mul(expm(scale(-half, s1)), R)
    k2, s2 = error_field_full(axpy(half, k1, v), R_mid, m_I, k1v, k2v, k1r, k2r, g, variant)
    R_mid = mat_mul(expm(scale(-half, s2)), R)
    k3, s3 = error_field_full(axpy(half, k2, v), R_mid, m_I, k1v, k2v, k1r, k2r, g, variant)
    R1 = mat_mul(expm(scale(-dt, s3)), R)
    k4, _ = error_field_full(axpy(dt, k3, v), R1, m_I, k1v, k2v, k1r, k2r, g, variant)
    v1 = (
        v[0] + (dt / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        v[1] + (dt / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        v[2] + (dt / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    )
    return v1, R1


def step_error_gamma(v, gm0, k1v, k2v, k1r, g, dt, variant):
    half = 0.5 * dt

    def f(vv, gm):
        gxv = cross(gm, vv)
        vd = axpy(k2v, cross(gm, gxv), axpy(-k1v, vv, scale(g, sub((0.0, 0.0, 1.0), gm))))
        if variant == 2:
            vd = axpy(-k1r, cross(vv, gxv), vd)
        return vd, scale(k1r, gxv)

    k1, w1 = f(v, gm0)
    g_mid = rot_apply(scale(half, w1), gm0)
    k2, w2 = f(axpy(half, k1, v), g_mid)
    g_mid = rot_apply(scale(half, w2), gm0)
    k3, w3 = f(axpy(half, k2, v), g_mid)
    g1 = rot_apply(scale(dt, w3), gm0)
    k4, _ = f(axpy(dt, k3, v), g1)
    v1 = (
        v[0] + (dt / 6.0) * (k1[0] + 2.0 * k2[0] + 2.0 * k3[0] + k4[0]),
        v[1] + (dt / 6.0) * (k1[1] + 2.0 * k2[1] + 2.0 * k3[1] + k4[1]),
        v[2] + (dt / 6.0) * (k1[2] + 2.0 * k2[2] + 2.0 * k3[2] + k4[2]),
    )
    n = norm(g1)
    return v1, (g1[0] / n, g1[1] / n, g1[2] / n)


# ---------------------------------------------------------------------------
# Lyapunov values on tuples (hot loops of the descent suites)


def lyap_obs1(v, gm, k1v, k2v, k1r, g) -> float:
    d = (-gm[0], -gm[1], 1.0 - gm[2])
    return (
        0.5 * dot(v, v)
        + (g * k2v / (2.0 * k1v * k1r)) * dot(d, d)
        - (g / k1v) * dot(v, d)
    )


def lyap_obs1_boundary(v, gm, k1v, k1r, g) -> float:
    c = g / k1v
    dl = (v[0] + c * gm[0], v[1] + c * gm[1], v[2] - c * (1.0 - gm[2]))
    return 0.5 * dot(dl, dl) + (2.0 * g / k1r) * (1.0 - gm[2])


def lyap_obs2(v, gm, k1v, k1r, g) -> float:
    c = cross(v, gm)
    return 0.5 * dot(c, c) + (g / k1r) * (1.0 - gm[2])
