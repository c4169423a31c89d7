"""Invariant-error geometry and stability verification oracles.

The estimation errors of the observers in :mod:`velaid.observers`, written
in the inertial frame as v_bar = R (v - v_hat) and R_bar = R R_hat^T, obey
autonomous differential equations: they evolve the same way regardless of
the vehicle trajectory. This module computes those errors and everything
needed to verify the observers' convergence claims mechanically:

* the three Lyapunov functions certifying the reduced-observer error
  dynamics, their analytic time derivatives, and the closed forms they
  must match;
* the four isolated equilibria of the full error dynamics and a nearest-
  equilibrium classifier;
* the poles of the error dynamics linearized about the desired
  equilibrium (roll/pitch pair, vertical velocity, heading);
* fixed-step geometric integrators for the autonomous error systems,
  used for Lyapunov-descent and instability probes.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import TYPE_CHECKING

import numpy as np

from . import _kernels as _k
from .observers import DEFAULT_M_I, GammaObserverState, ObserverGains
from .so3 import E3, cross, rotation_angle

if TYPE_CHECKING:
    from .observers import FullObserverState
    from .simworld import TruthState

__all__ = [
    "Classification",
    "EquilibriumSet",
    "ErrorState",
    "PoleReport",
    "classify_equilibrium",
    "classify_gamma_equilibrium",
    "cross_error_rate",
    "error_field_full",
    "equilibria",
    "gamma_error_field",
    "gamma_error_field_raw",
    "gamma_invariant_errors",
    "heading_frame",
    "invariant_errors",
    "linearized_poles",
    "lyapunov_obs1",
    "lyapunov_obs1_boundary",
    "lyapunov_obs1_rate",
    "lyapunov_obs1_rate_closed",
    "lyapunov_obs2",
    "lyapunov_obs2_rate",
    "lyapunov_obs2_rate_closed",
    "make_error_state",
    "step_error_full",
    "step_error_gamma",
]


@dataclass(frozen=True)
class ErrorState:
    """Invariant estimation errors and derived quantities.

    v_bar : inertial-frame velocity error R (v - v_hat), m/s.
    R_bar : attitude error R R_hat^T, or None for reduced-observer errors.
    gamma_bar : R_bar e3; equals e3 exactly when roll/pitch are correct.
    delta : v_bar - (g/k1v)(e3 - gamma_bar), the shifted velocity error
        that decays at rate k1v when the gain condition holds with equality.
    eta : heading alignment vector in the magnetic-declination frame
        (None for reduced errors); at the desired equilibrium eta = e1.
    attitude_error_angle : geodesic angle of R_bar in [0, pi]; for reduced
        errors, the angle between gamma_bar and e3.
    """

    v_bar: np.ndarray
    R_bar: np.ndarray | None
    gamma_bar: np.ndarray
    delta: np.ndarray
    eta: np.ndarray | None
    attitude_error_angle: float


def heading_frame(m_I: np.ndarray) -> tuple[np.ndarray, np.ndarray, float]:
    """Declination rotation built from the horizontal part of m_I.

    Returns (R_alpha, m_bar_I, alpha) where m_bar_I is the unit horizontal
    projection of m_I and R_alpha the yaw rotation with R_alpha e1 =
    m_bar_I. The field is normalized on ingest.

    Raises
    ------
    ValueError
        If m_I is (numerically) collinear with e3, which leaves the
        heading unobservable.
    """
    m = np.asarray(m_I, dtype=float)
    m = m / np.linalg.norm(m)
    h = math.hypot(float(m[0]), float(m[1]))
    if h < 1e-9:
        raise ValueError("magnetic field collinear with gravity: heading unobservable")
    m_bar = np.array([m[0] / h, m[1] / h, 0.0])
    alpha = math.atan2(float(m[1]), float(m[0]))
    ca, sa = math.cos(alpha), math.sin(alpha)
    R_alpha = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
    return R_alpha, m_bar, alpha


def _delta(v_bar: np.ndarray, gamma_bar: np.ndarray, gains: ObserverGains) -> np.ndarray:
    return v_bar - (gains.g / gains.k1v) * (E3 - gamma_bar)


def make_error_state(
    v_bar: np.ndarray,
    gains: ObserverGains,
    R_bar: np.ndarray | None = None,
    gamma_bar: np.ndarray | None = None,
    m_I: np.ndarray | None = None,
) -> ErrorState:
    """Build an :class:`ErrorState` directly in error space.

    Give either the attitude error R_bar (gamma_bar and the error angle
    are derived from it, and eta too when m_I is supplied) or just a unit
    gamma_bar for reduced-observer errors.
    """
    if (R_bar is None) == (gamma_bar is None):
        raise ValueError("give exactly one of R_bar / gamma_bar")
    if R_bar is not None:
        gamma_bar = np.array([R_bar[0, 2], R_bar[1, 2], R_bar[2, 2]])
        angle = rotation_angle(R_bar)
        eta = None
        if m_I is not None:
            R_alpha, _, _ = heading_frame(m_I)
            eta = R_alpha.T @ R_bar @ R_alpha[:, 0]
    else:
        angle = math.acos(min(1.0, max(-1.0, float(gamma_bar[2]))))
        eta = None
    return ErrorState(
        v_bar=np.asarray(v_bar, dtype=float),
        R_bar=R_bar,
        gamma_bar=gamma_bar,
        delta=_delta(v_bar, gamma_bar, gains),
        eta=eta,
        attitude_error_angle=angle,
    )


def invariant_errors(
    truth: "TruthState",
    est: "FullObserverState",
    gains: ObserverGains,
    m_I: np.ndarray = DEFAULT_M_I,
) -> ErrorState:
    """Invariant errors of a full observer state against the truth."""
    R = truth.R
    v_bar = R @ (truth.v - est.v_hat)
    R_bar = R @ est.R_hat.T
    gamma_bar = np.array([R_bar[0, 2], R_bar[1, 2], R_bar[2, 2]])
    R_alpha, _, _ = heading_frame(m_I)
    eta = R_alpha.T @ R_bar @ R_alpha[:, 0]
    return ErrorState(
        v_bar=v_bar,
        R_bar=R_bar,
        gamma_bar=gamma_bar,
        delta=_delta(v_bar, gamma_bar, gains),
        eta=eta,
        attitude_error_angle=rotation_angle(R_bar),
    )


def gamma_invariant_errors(
    truth: "TruthState",
    est: GammaObserverState,
    gains: ObserverGains,
) -> ErrorState:
    """Invariant errors of a reduced observer state (no attitude matrix)."""
    R = truth.R
    v_bar = R @ (truth.v - est.v_hat)
    gamma_bar = R @ est.gamma_hat
    ang = math.acos(min(1.0, max(-1.0, float(gamma_bar[2]))))
    return ErrorState(
        v_bar=v_bar,
        R_bar=None,
        gamma_bar=gamma_bar,
        delta=_delta(v_bar, gamma_bar, gains),
        eta=None,
        attitude_error_angle=ang,
    )


# ---------------------------------------------------------------------------
# Lyapunov functions and their rates along the reduced error fields


def lyapunov_obs1(e: ErrorState, gains: ObserverGains) -> float:
    """Energy certifying variant 1 under the gain condition:
    0.5|v_bar|^2 + (g k2v / (2 k1v k1r)) |e3 - gamma_bar|^2
    - (g/k1v) v_bar . (e3 - gamma_bar).

    Positive-definite iff k1r < k1v*k2v/g (strict); zero only at the
    desired equilibrium.
    """
    g, k1v = gains.g, gains.k1v
    d = E3 - e.gamma_bar
    return float(
        0.5 * np.dot(e.v_bar, e.v_bar)
        + (g * gains.k2v / (2.0 * k1v * gains.k1r)) * np.dot(d, d)
        - (g / k1v) * np.dot(e.v_bar, d)
    )


def lyapunov_obs1_boundary(e: ErrorState, gains: ObserverGains) -> float:
    """Energy for variant 1 at the gain-condition boundary:
    0.5|delta|^2 + (2g/k1r)(1 - e3 . gamma_bar)."""
    return float(
        0.5 * np.dot(e.delta, e.delta)
        + (2.0 * gains.g / gains.k1r) * (1.0 - float(e.gamma_bar[2]))
    )


def lyapunov_obs2(e: ErrorState, gains: ObserverGains) -> float:
    """Energy certifying variant 2 for any positive gains:
    0.5|v_bar x gamma_bar|^2 + (g/k1r)(1 - e3 . gamma_bar)."""
    c = cross(e.v_bar, e.gamma_bar)
    return float(
        0.5 * np.dot(c, c) + (gains.g / gains.k1r) * (1.0 - float(e.gamma_bar[2]))
    )


def gamma_error_field_raw(
    v_bar: np.ndarray,
    gamma_bar: np.ndarray,
    gains: ObserverGains,
    variant: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Autonomous right-hand side of the reduced error dynamics.

    dv_bar/dt = g (e3 - gamma_bar) - k1v v_bar
                + k2v gamma_bar x (gamma_bar x v_bar)
                [+ k1r v_bar x (v_bar x gamma_bar) for variant 2]
    dgamma_bar/dt = -k1r gamma_bar x (gamma_bar x v_bar)
    """
    gxv = cross(gamma_bar, v_bar)
    gxgxv = cross(gamma_bar, gxv)
    v_dot = gains.g * (E3 - gamma_bar) - gains.k1v * v_bar + gains.k2v * gxgxv
    if variant == 2:
        v_dot = v_dot - gains.k1r * cross(v_bar, gxv)
    return v_dot, -gains.k1r * gxgxv


def gamma_error_field(
    e: ErrorState, gains: ObserverGains, variant: int = 1
) -> tuple[np.ndarray, np.ndarray]:
    """Reduced error field evaluated at an :class:`ErrorState`."""
    return gamma_error_field_raw(e.v_bar, e.gamma_bar, gains, variant)


def lyapunov_obs1_rate(e: ErrorState, gains: ObserverGains) -> float:
    """d/dt of :func:`lyapunov_obs1` as gradient . field (variant 1)."""
    v_dot, g_dot = gamma_error_field_raw(e.v_bar, e.gamma_bar, gains, 1)
    g, k1v = gains.g, gains.k1v
    d = E3 - e.gamma_bar
    beta = g * gains.k2v / (k1v * gains.k1r)
    return float(
        np.dot(e.v_bar, v_dot)
        - beta * np.dot(d, g_dot)
        - (g / k1v) * (np.dot(v_dot, d) - np.dot(e.v_bar, g_dot))
    )


def lyapunov_obs1_rate_closed(e: ErrorState, gains: ObserverGains) -> float:
    """Closed form the variant-1 rate must equal:
    -k1v |delta|^2 - (k2v - g k1r / k1v) |gamma_bar x v_bar|^2."""
    c = cross(e.gamma_bar, e.v_bar)
    return float(
        -gains.k1v * np.dot(e.delta, e.delta)
        - (gains.k2v - gains.g * gains.k1r / gains.k1v) * np.dot(c, c)
    )


def lyapunov_obs2_rate(e: ErrorState, gains: ObserverGains) -> float:
    """d/dt of :func:`lyapunov_obs2` as gradient . field (variant 2)."""
    v_dot, g_dot = gamma_error_field_raw(e.v_bar, e.gamma_bar, gains, 2)
    c = cross(e.v_bar, e.gamma_bar)
    c_dot = cross(v_dot, e.gamma_bar) + cross(e.v_bar, g_dot)
    return float(np.dot(c, c_dot) - (gains.g / gains.k1r) * float(g_dot[2]))


def lyapunov_obs2_rate_closed(e: ErrorState, gains: ObserverGains) -> float:
    """Closed form the variant-2 rate must equal:
    -(k1v + k2v) |v_bar x gamma_bar|^2."""
    c = cross(e.v_bar, e.gamma_bar)
    return float(-(gains.k1v + gains.k2v) * np.dot(c, c))


def cross_error_rate(
    e: ErrorState, gains: ObserverGains
) -> tuple[np.ndarray, np.ndarray]:
    """d/dt (v_bar x gamma_bar) along the variant-2 field.

    Returns the product-rule evaluation and the closed form
    g e3 x gamma_bar - (k1v + k2v) v_bar x gamma_bar; the two must agree.
    """
    v_dot, g_dot = gamma_error_field_raw(e.v_bar, e.gamma_bar, gains, 2)
    analytic = cross(v_dot, e.gamma_bar) + cross(e.v_bar, g_dot)
    closed = gains.g * cross(E3, e.gamma_bar) - (gains.k1v + gains.k2v) * cross(
        e.v_bar, e.gamma_bar
    )
    return analytic, closed


# ---------------------------------------------------------------------------
# Equilibria of the full error dynamics


@dataclass(frozen=True)
class EquilibriumSet:
    """The four isolated equilibria (v_bar*, R_bar*) of the full error
    dynamics, ordered so that index 0 is the desired one (0, I); index 1
    is the heading-reversed saddle; indices 2 and 3 invert the gravity
    direction and carry the velocity offset (2g/k1v) e3."""

    pairs: tuple[tuple[np.ndarray, np.ndarray], ...]
    R_alpha: np.ndarray
    m_bar_I: np.ndarray
    alpha: float


def equilibria(gains: ObserverGains, m_I: np.ndarray = DEFAULT_M_I) -> EquilibriumSet:
    """Enumerate the error-dynamics equilibria for a given field direction."""
    R_alpha, m_bar, alpha = heading_frame(m_I)
    v_up = (2.0 * gains.g / gains.k1v) * E3
    zero = np.zeros(3)

    def conj(d0: float, d1: float, d2: float) -> np.ndarray:
        return R_alpha @ np.diag([d0, d1, d2]) @ R_alpha.T

    pairs = (
        (zero, np.eye(3)),
        (zero, conj(-1.0, -1.0, 1.0)),
        (v_up, conj(-1.0, 1.0, -1.0)),
        (v_up, conj(1.0, -1.0, -1.0)),
    )
    return EquilibriumSet(pairs=pairs, R_alpha=R_alpha, m_bar_I=m_bar, alpha=alpha)


@dataclass(frozen=True)
class Classification:
    """Nearest equilibrium in the product metric |dv| + angle(dR)."""

    label: int
    distance: float
    within_tol: bool | None = None


def classify_equilibrium(
    e: ErrorState, eq: EquilibriumSet, tol: float | None = None
) -> Classification:
    """Label an error state by its nearest equilibrium.

    The metric is ``norm(v_bar - v_bar*) + angle(R_bar R_bar*^T)``; it is
    only meant for bucketing trajectories, not for acceptance thresholds.
    """
    if e.R_bar is None:
        raise ValueError("classification needs a full error state (R_bar present)")
    best_label, best_dist = 0, math.inf
    for i, (v_star, R_star) in enumerate(eq.pairs):
        d = float(np.linalg.norm(e.v_bar - v_star)) + rotation_angle(e.R_bar @ R_star.T)
        if d < best_dist:
            best_label, best_dist = i, d
    return Classification(
        label=best_label,
        distance=best_dist,
        within_tol=None if tol is None else best_dist <= tol,
    )


def classify_gamma_equilibrium(
    v_bar: np.ndarray, gamma_bar: np.ndarray, gains: ObserverGains
) -> Classification:
    """Nearest of the two reduced-error equilibria: 0 for (0, e3), 1 for
    ((2g/k1v) e3, -e3). Metric: |dv| + angle between gravity directions."""
    v_up = (2.0 * gains.g / gains.k1v) * E3
    ang_des = math.acos(min(1.0, max(-1.0, float(gamma_bar[2]))))
    ang_und = math.acos(min(1.0, max(-1.0, -float(gamma_bar[2]))))
    d0 = float(np.linalg.norm(v_bar)) + ang_des
    d1 = float(np.linalg.norm(v_bar - v_up)) + ang_und
    if d0 <= d1:
        return Classification(label=0, distance=d0)
    return Classification(label=1, distance=d1)


# ---------------------------------------------------------------------------
# Linearization poles


@dataclass(frozen=True)
class PoleReport:
    """Poles of the error dynamics linearized at the desired equilibrium.

    The roll/pitch block appears twice (one copy per horizontal axis); its
    characteristic polynomial is s^2 + (k1v + k2v) s + g k1r. The vertical
    velocity error decouples with pole -k1v. The heading error contracts
    at k2r * |pi_e3 m_I|^2 (reported under both the squared and unsquared
    horizontal-norm conventions) and expands at the same rate at the
    heading-reversed equilibrium.
    """

    pair_poles: tuple[complex, complex]
    pair_is_double: bool
    vertical_pole: float
    yaw_pole: float
    yaw_pole_unsquared_convention: float
    yaw_pole_undesired: float
    discriminant: float
    discriminant_sign: int


def linearized_poles(
    gains: ObserverGains, m_I: np.ndarray = DEFAULT_M_I
) -> PoleReport:
    """Solve the linearized characteristic polynomials.

    A discriminant within floating-point noise of zero is treated as an
    exact double root, so gain sets tuned for coincident poles report
    them without a spurious ~1e-8 imaginary part.
    """
    k1v, k2v, k1r, g = gains.k1v, gains.k2v, gains.k1r, gains.g
    b = k1v + k2v
    c = g * k1r
    disc = b * b - 4.0 * c
    noise = 64.0 * np.finfo(float).eps * (b * b + 4.0 * abs(c))
    if abs(disc) <= noise:
        poles = (complex(-0.5 * b), complex(-0.5 * b))
        double = True
        sign = 0
    else:
        sq = cmath.sqrt(complex(disc))
        poles = ((-b + sq) / 2.0, (-b - sq) / 2.0)
        double = False
        sign = 1 if disc > 0 else -1

    m = np.asarray(m_I, dtype=float)
    m = m / np.linalg.norm(m)
    h2 = float(m[0]) ** 2 + float(m[1]) ** 2
    k2r_eff = gains.k2r * h2
    return PoleReport(
        pair_poles=poles,
        pair_is_double=double,
        vertical_pole=-k1v,
        yaw_pole=-k2r_eff,
        yaw_pole_unsquared_convention=-gains.k2r * math.sqrt(h2),
        yaw_pole_undesired=k2r_eff,
        discriminant=disc,
        discriminant_sign=sign,
    )


# ---------------------------------------------------------------------------
# Fixed-step integrators for the autonomous error systems


def error_field_full(
    v_bar: np.ndarray,
    R_bar: np.ndarray,
    gains: ObserverGains,
    m_I: np.ndarray,
    variant: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """Full error field: returns (dv_bar/dt, s) with dR_bar/dt = -[s]_x R_bar."""
    gamma_bar = np.array([R_bar[0, 2], R_bar[1, 2], R_bar[2, 2]])
    gxv = cross(gamma_bar, v_bar)
    sigma_v = gains.k1v * v_bar - gains.k2v * cross(gamma_bar, gxv)
    if variant == 2:
        sigma_v = sigma_v + gains.k1r * cross(v_bar, gxv)
    v_dot = gains.g * (E3 - gamma_bar) - sigma_v
    c = float(np.dot(cross(m_I, R_bar @ m_I), gamma_bar))
    sigma_R = -gains.k1r * gxv + (gains.k2r * c) * gamma_bar
    return v_dot, sigma_R


def step_error_full(
    v_bar: np.ndarray,
    R_bar: np.ndarray,
    gains: ObserverGains,
    m_I: np.ndarray,
    dt: float,
    variant: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """One RK4/exponential step of the full autonomous error dynamics."""
    v1, R1 = _k.step_error_full(
        _k.t3(v_bar),
        _k.t9(R_bar),
        _k.t3(m_I),
        gains.k1v,
        gains.k2v,
        gains.k1r,
        gains.k2r,
        gains.g,
        dt,
        variant,
    )
    return _k.a3(v1), _k.a9(R1)


def step_error_gamma(
    v_bar: np.ndarray,
    gamma_bar: np.ndarray,
    gains: ObserverGains,
    dt: float,
    variant: int = 1,
) -> tuple[np.ndarray, np.ndarray]:
    """One RK4/exponential step of the reduced autonomous error dynamics.

    The gravity-direction error rotates by the exponential of
    k1r (gamma_bar x v_bar) evaluated at the midpoint stage, so its unit
    norm is preserved by construction.
    """
    v1, g1 = _k.step_error_gamma(
        _k.t3(v_bar),
        _k.t3(gamma_bar),
        gains.k1v,
        gains.k2v,
        gains.k1r,
        gains.g,
        dt,
        variant,
    )
    return _k.a3(v1), _k.a3(g1)
