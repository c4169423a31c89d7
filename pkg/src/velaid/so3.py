"""3-vector and rotation-matrix algebra for body-frame attitude estimation.

All rotations are 3x3 orthonormal matrices with determinant +1, mapping
body-frame coordinates to inertial (NED) coordinates. Euler angles follow
the aerospace ZYX (yaw-pitch-roll) intrinsic convention, which is the one
that makes the gravity direction R^T e3 equal
[-sin(pitch), sin(roll)cos(pitch), cos(roll)cos(pitch)].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "E1",
    "E2",
    "E3",
    "EulerAngles",
    "cross",
    "euler_from_rotation",
    "exp_rotation",
    "gravity_direction",
    "orthonormalize",
    "project_orthogonal",
    "rotate_unit",
    "rotation_angle",
    "rotation_defect",
    "rotation_from_euler",
    "skew",
    "vex",
]

E1 = np.array([1.0, 0.0, 0.0])
E2 = np.array([0.0, 1.0, 0.0])
E3 = np.array([0.0, 0.0, 1.0])

# below this rotation-vector norm, exp_rotation switches to the 2-term series
_EXP_SERIES_NORM = 1e-12
# |cos(pitch)| below this means gimbal lock for Euler extraction
_GIMBAL_EPS = 1e-9


@dataclass(frozen=True)
class EulerAngles:
    """ZYX Euler angles in radians.

    roll is in (-pi, pi], pitch in [-pi/2, pi/2], yaw in (-pi, pi].
    ``gimbal_lock`` is set when |cos(pitch)| < 1e-9; in that case roll is
    pinned to 0 and yaw absorbs the remaining rotation, so the result is
    still deterministic and round-trips to the same rotation.
    """

    roll: float
    pitch: float
    yaw: float
    gimbal_lock: bool = False


def cross(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross product a x b for shape-(3,) arrays (faster than np.cross)."""
    a0, a1, a2 = float(a[0]), float(a[1]), float(a[2])
    b0, b1, b2 = float(b[0]), float(b[1]), float(b[2])
    return np.array([a1 * b2 - a2 * b1, a2 * b0 - a0 * b2, a0 * b1 - a1 * b0])


def skew(u: np.ndarray) -> np.ndarray:
    """Skew-symmetric matrix [u]_x with [u]_x w = u x w.

    Parameters
    ----------
    u : ndarray, shape (3,)

    Returns
    -------
    ndarray, shape (3, 3)
    """
    x, y, z = float(u[0]), float(u[1]), float(u[2])
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def vex(M: np.ndarray) -> np.ndarray:
    """Inverse of :func:`skew` for an (approximately) skew-symmetric matrix."""
    return np.array(
        [
            0.5 * (M[2, 1] - M[1, 2]),
            0.5 * (M[0, 2] - M[2, 0]),
            0.5 * (M[1, 0] - M[0, 1]),
        ]
    )


def exp_rotation(u: np.ndarray) -> np.ndarray:
    """Rotation matrix exp([u]_x) via the Rodrigues formula.

    Parameters
    ----------
    u : ndarray, shape (3,)
        Rotation vector in radians; direction is the axis, norm the angle.

    Returns
    -------
    ndarray, shape (3, 3)
        Orthonormal within 1e-9 Frobenius defect for norms up to at least
        10*pi. For ``norm(u) < 1e-12`` the 2-term series I + [u]_x is
        returned, avoiding division by the norm.
    """
    x, y, z = float(u[0]), float(u[1]), float(u[2])
    t2 = x * x + y * y + z * z
    if t2 < _EXP_SERIES_NORM * _EXP_SERIES_NORM:
        return np.array([[1.0, -z, y], [z, 1.0, -x], [-y, x, 1.0]])
    t = math.sqrt(t2)
    a = math.sin(t) / t
    b = (1.0 - math.cos(t)) / t2
    xx, yy, zz = x * x, y * y, z * z
    xy, xz, yz = x * y, x * z, y * z
    return np.array(
        [
            [1.0 - b * (yy + zz), b * xy - a * z, b * xz + a * y],
            [b * xy + a * z, 1.0 - b * (xx + zz), b * yz - a * x],
            [b * xz - a * y, b * yz + a * x, 1.0 - b * (xx + yy)],
        ]
    )


def rotate_unit(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Apply exp([u]_x) to a single vector without building the matrix.

    Equivalent to ``exp_rotation(u) @ v`` but cheaper, and exactly v (up to
    one rounding of each component) when u is parallel to v.
    """
    x, y, z = float(u[0]), float(u[1]), float(u[2])
    v0, v1, v2 = float(v[0]), float(v[1]), float(v[2])
    t2 = x * x + y * y + z * z
    if t2 < _EXP_SERIES_NORM * _EXP_SERIES_NORM:
        a, b = 1.0, 0.5
    else:
        t = math.sqrt(t2)
        a = math.sin(t) / t
        b = (1.0 - math.cos(t)) / t2
    # u x v and u x (u x v)
    c0 = y * v2 - z * v1
    c1 = z * v0 - x * v2
    c2 = x * v1 - y * v0
    d0 = y * c2 - z * c1
    d1 = z * c0 - x * c2
    d2 = x * c1 - y * c0
    return np.array([v0 + a * c0 + b * d0, v1 + a * c1 + b * d1, v2 + a * c2 + b * d2])


def gravity_direction(R: np.ndarray) -> np.ndarray:
    """Body-frame gravity direction R^T e3 (the third row of R).

    For the ZYX convention this equals
    [-sin(pitch), sin(roll)cos(pitch), cos(roll)cos(pitch)] and is
    independent of yaw.
    """
    return np.array([R[2, 0], R[2, 1], R[2, 2]])


def rotation_from_euler(roll: float, pitch: float, yaw: float) -> np.ndarray:
    """Rotation matrix Rz(yaw) Ry(pitch) Rx(roll) (ZYX intrinsic, NED)."""
    cf, sf = math.cos(roll), math.sin(roll)
    ct, st = math.cos(pitch), math.sin(pitch)
    cp, sp = math.cos(yaw), math.sin(yaw)
    return np.array(
        [
            [cp * ct, cp * st * sf - sp * cf, cp * st * cf + sp * sf],
            [sp * ct, sp * st * sf + cp * cf, sp * st * cf - cp * sf],
            [-st, ct * sf, ct * cf],
        ]
    )


def _half_open(angle: float) -> float:
    # atan2 returns [-pi, pi]; fold -pi onto +pi for the (-pi, pi] contract
    return math.pi if angle == -math.pi else angle


def euler_from_rotation(R: np.ndarray) -> EulerAngles:
    """Extract ZYX Euler angles from a rotation matrix.

    Round-trips with :func:`rotation_from_euler` within 1e-9 whenever
    |pitch| < pi/2 - 1e-6. At gimbal lock (|cos(pitch)| < 1e-9) roll is
    pinned to 0, ``gimbal_lock`` is flagged, and yaw is recovered from the
    remaining degrees of freedom.
    """
    ct = math.hypot(float(R[2, 1]), float(R[2, 2]))
    pitch = math.atan2(-float(R[2, 0]), ct)
    if ct < _GIMBAL_EPS:
        return EulerAngles(
            roll=0.0,
            pitch=pitch,
            yaw=_half_open(math.atan2(-float(R[0, 1]), float(R[1, 1]))),
            gimbal_lock=True,
        )
    return EulerAngles(
        roll=_half_open(math.atan2(float(R[2, 1]), float(R[2, 2]))),
        pitch=pitch,
        yaw=_half_open(math.atan2(float(R[1, 0]), float(R[0, 0]))),
    )


def project_orthogonal(x: np.ndarray) -> np.ndarray:
    """Orthogonal projector I - x x^T onto the plane normal to unit x.

    Raises
    ------
    ValueError
        If ``norm(x)`` deviates from 1 by more than 1e-9.
    """
    n = float(x[0]) ** 2 + float(x[1]) ** 2 + float(x[2]) ** 2
    if abs(math.sqrt(n) - 1.0) > 1e-9:
        raise ValueError(f"project_orthogonal requires a unit vector, got norm {math.sqrt(n):.3e}")
    return np.eye(3) - np.outer(x, x)


def rotation_defect(R: np.ndarray) -> float:
    """Frobenius norm of R^T R - I (orthonormality drift of an integrated R)."""
    return float(np.linalg.norm(R.T @ R - np.eye(3)))


def orthonormalize(M: np.ndarray) -> np.ndarray:
    """Nearest rotation matrix in the Frobenius norm (polar factor).

    Parameters
    ----------
    M : ndarray, shape (3, 3)
        Must have positive determinant and full rank.

    Returns
    -------
    ndarray, shape (3, 3)
        Proper rotation; idempotent within 1e-12 on inputs that already
        satisfy the rotation invariants.

    Raises
    ------
    ValueError
        If det(M) <= 0 or M is (numerically) rank-deficient.
    """
    det = float(np.linalg.det(M))
    if det <= 0.0:
        raise ValueError(f"orthonormalize requires det(M) > 0, got {det:.3e}")
    U, s, Vt = np.linalg.svd(M)
    if s[-1] <= 1e-12 * s[0]:
        raise ValueError("orthonormalize: matrix is rank-deficient")
    R = U @ Vt
    if np.linalg.det(R) < 0.0:
        # polar factor of a det>0 matrix is proper; this is unreachable unless
        # the determinant estimate above was swamped by rounding
        raise ValueError("orthonormalize: no proper rotation factor")
    return R


def rotation_angle(R: np.ndarray) -> float:
    """Geodesic rotation angle arccos((trace(R) - 1)/2), clamped to [0, pi]."""
    c = 0.5 * (float(R[0, 0]) + float(R[1, 1]) + float(R[2, 2]) - 1.0)
    return math.acos(min(1.0, max(-1.0, c)))
