"""Velocity-aided attitude observers on R^3 x SO(3) and their reduction.

Two observer variants estimate body-frame velocity and attitude from
gyro, accelerometer, magnetometer and body-frame velocity measurements:

* variant 1 uses linear velocity-error feedback only;
* variant 2 adds a quadratic velocity-error term that removes the gain
  restriction needed by variant 1 for almost-global convergence.

Both share the same attitude correction: a velocity/gravity term plus a
magnetometer term that acts purely about the estimated gravity direction,
so the roll/pitch (gravity-direction) estimate never depends on the
magnetometer. The reduced observers on R^3 x S^2 estimate velocity and
gravity direction only and take no magnetometer input at all.

Discretization: velocity states advance by classical RK4 with the
measurement frozen across the step; rotation/direction states advance by a
single exponential whose correction is evaluated at the RK4 midpoint
state. Evaluating the magnetometer correction about the midpoint gravity
direction is what keeps the discrete roll/pitch estimate decoupled from
magnetometer errors at second order in the step size.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k
from .so3 import cross, gravity_direction, orthonormalize

__all__ = [
    "DEFAULT_GRAVITY",
    "DEFAULT_M_I",
    "FullObserverState",
    "GainReport",
    "GammaObserverState",
    "MeasurementFrame",
    "ObserverGains",
    "innovation_obs1",
    "innovation_obs2",
    "reduce_to_gamma",
    "step_full",
    "step_gamma",
    "validate_gains",
]

DEFAULT_GRAVITY = 9.81

# normalized Earth magnetic field direction used by all bundled scenarios
DEFAULT_M_I = np.array([0.434, -0.0091, 0.9008])

# re-orthonormalize the attitude estimate when R^T R - I drifts past this
_DEFECT_LIMIT = 1e-9


@dataclass(frozen=True)
class ObserverGains:
    """Constant observer gains.

    k1v, k2v act on the velocity error, k1r couples the velocity error into
    the attitude correction, k2r scales the magnetometer (heading) term.
    All four must be positive for any of the stability statements to apply.
    ``satisfies_gain_condition`` checks k1r <= k1v*k2v/g, the sufficient
    condition for almost-global convergence of variant 1; variant 2 does
    not need it.
    """

    k1v: float
    k2v: float
    k1r: float
    k2r: float
    g: float = DEFAULT_GRAVITY

    @property
    def all_positive(self) -> bool:
        return self.k1v > 0.0 and self.k2v > 0.0 and self.k1r > 0.0 and self.k2r > 0.0

    @property
    def satisfies_gain_condition(self) -> bool:
        return self.k1r <= self.k1v * self.k2v / self.g

    @property
    def gain_condition_margin(self) -> float:
        """k1v*k2v/g - k1r; non-negative iff the gain condition holds."""
        return self.k1v * self.k2v / self.g - self.k1r


@dataclass(frozen=True)
class FullObserverState:
    """Velocity estimate (body frame, m/s) and attitude estimate."""

    v_hat: np.ndarray
    R_hat: np.ndarray


@dataclass(frozen=True)
class GammaObserverState:
    """Velocity estimate and unit gravity-direction estimate (body frame)."""

    v_hat: np.ndarray
    gamma_hat: np.ndarray


@dataclass(frozen=True)
class MeasurementFrame:
    """One synchronized sensor sample, all in the body frame.

    t : seconds; omega : rad/s; a_B : specific acceleration, m/s^2;
    m_B : normalized magnetic field; v_meas : velocity, m/s.
    """

    t: float
    omega: np.ndarray
    a_B: np.ndarray
    m_B: np.ndarray
    v_meas: np.ndarray


@dataclass(frozen=True)
class GainReport:
    """Outcome of :func:`validate_gains`; never raised, always returned."""

    positive: dict = field(default_factory=dict)
    all_positive: bool = False
    gain_condition_satisfied: bool = False
    gain_condition_margin: float = 0.0
    discriminant: float = 0.0
    discriminant_sign: int = 0
    valid: bool = False


def validate_gains(gains: ObserverGains) -> GainReport:
    """Check gain positivity, the variant-1 gain condition, and the
    discriminant (k1v + k2v)^2 - 4 g k1r of the linearized roll/pitch
    dynamics (negative means complex poles, only possible when the gain
    condition is violated)."""
    positive = {
        "k1v": gains.k1v > 0.0,
        "k2v": gains.k2v > 0.0,
        "k1r": gains.k1r > 0.0,
        "k2r": gains.k2r > 0.0,
    }
    disc = (gains.k1v + gains.k2v) ** 2 - 4.0 * gains.g * gains.k1r
    return GainReport(
        positive=positive,
        all_positive=all(positive.values()),
        gain_condition_satisfied=gains.satisfies_gain_condition,
        gain_condition_margin=gains.gain_condition_margin,
        discriminant=disc,
        discriminant_sign=(disc > 0) - (disc < 0),
        valid=all(positive.values()),
    )


def _innovation(
    v_tilde: np.ndarray,
    gamma_hat: np.ndarray,
    m_B: np.ndarray,
    m_hat_B: np.ndarray,
    gains: ObserverGains,
    variant: int,
) -> tuple[np.ndarray, np.ndarray]:
    """Correction terms from the velocity mismatch and heading mismatch.

    The magnetometer contribution to the attitude correction is
    k2r * ((m_B x m_hat_B) . gamma_hat) * gamma_hat: parallel to gamma_hat
    by construction, so it can only turn the estimate about the gravity
    direction (heading-only action).
    """
    gxv = cross(gamma_hat, v_tilde)
    sigma_v = gains.k1v * v_tilde - gains.k2v * cross(gamma_hat, gxv)
    if variant == 2:
        sigma_v = sigma_v + gains.k1r * cross(v_tilde, gxv)
    c = float(np.dot(cross(m_B, m_hat_B), gamma_hat))
    sigma_R = -gains.k1r * gxv + (gains.k2r * c) * gamma_hat
    return sigma_v, sigma_R


def innovation_obs1(
    s: FullObserverState,
    m: MeasurementFrame,
    gains: ObserverGains,
    m_I: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Variant-1 innovations (sigma_v, sigma_R).

    sigma_v = k1v*vt - k2v*gh x (gh x vt) and
    sigma_R = k1r*vt x gh + k2r*((m_B x m_hat_B) . gh)*gh, where
    vt = v_meas - v_hat, gh = R_hat^T e3, m_hat_B = R_hat^T m_I.
    """
    gh = gravity_direction(s.R_hat)
    return _innovation(m.v_meas - s.v_hat, gh, m.m_B, s.R_hat.T @ m_I, gains, 1)


def innovation_obs2(
    s: FullObserverState,
    m: MeasurementFrame,
    gains: ObserverGains,
    m_I: np.ndarray,
) -> tuple[np.ndarray, np.ndarray]:
    """Variant-2 innovations: same sigma_R as variant 1, sigma_v carries
    the extra quadratic term -k1r * vt x (vt x gh)."""
    gh = gravity_direction(s.R_hat)
    return _innovation(m.v_meas - s.v_hat, gh, m.m_B, s.R_hat.T @ m_I, gains, 2)


def step_full(
    s: FullObserverState,
    m: MeasurementFrame,
    gains: ObserverGains,
    m_I: np.ndarray,
    dt: float,
    variant: int = 1,
) -> FullObserverState:
    """Advance the full observer by one step of size dt.

    The velocity estimate integrates
    dv_hat/dt = v_hat x omega + a_B + g * R_hat^T e3 + sigma_v
    by RK4, recomputing the innovations at every stage with the measurement
    held fixed; the attitude advances by
    R_hat <- R_hat expm([dt*(omega + sigma_R)]_x) with sigma_R taken at the
    midpoint (third RK4) stage. The returned attitude is re-orthonormalized
    whenever its Frobenius defect exceeds 1e-9.
    """
    if dt <= 0.0:
        raise ValueError(f"step size must be positive, got {dt}")
    if variant not in (1, 2):
        raise ValueError(f"variant must be 1 or 2, got {variant}")

    v1, R1 = _k.step_full(
        _k.t3(s.v_hat),
        _k.t9(s.R_hat),
        _k.t3(m.omega),
        _k.t3(m.a_B),
        _k.t3(m.m_B),
        _k.t3(m.v_meas),
        _k.t3(m_I),
        gains.k1v,
        gains.k2v,
        gains.k1r,
        gains.k2r,
        gains.g,
        dt,
        variant,
    )
    if _k.frobenius_defect(R1) > _DEFECT_LIMIT:
        return FullObserverState(v_hat=_k.a3(v1), R_hat=orthonormalize(_k.a9(R1)))
    return FullObserverState(v_hat=_k.a3(v1), R_hat=_k.a9(R1))


def step_gamma(
    s: GammaObserverState,
    m: MeasurementFrame,
    gains: ObserverGains,
    dt: float,
    variant: int = 1,
) -> GammaObserverState:
    """Advance the reduced (velocity + gravity-direction) observer.

    Mirrors :func:`step_full` with gamma_hat in place of R_hat^T e3:
    gamma_hat <- expm([-dt*(omega + sigma_R)]_x) gamma_hat, which preserves
    the unit norm by construction. Never reads the magnetometer channel.
    """
    if dt <= 0.0:
        raise ValueError(f"step size must be positive, got {dt}")
    if variant not in (1, 2):
        raise ValueError(f"variant must be 1 or 2, got {variant}")

    v1, g1 = _k.step_gamma(
        _k.t3(s.v_hat),
        _k.t3(s.gamma_hat),
        _k.t3(m.omega),
        _k.t3(m.a_B),
        _k.t3(m.v_meas),
        gains.k1v,
        gains.k2v,
        gains.k1r,
        gains.g,
        dt,
        variant,
    )
    return GammaObserverState(v_hat=_k.a3(v1), gamma_hat=_k.a3(g1))


def reduce_to_gamma(s: FullObserverState) -> GammaObserverState:
    """Project a full observer state to the reduced one: (v_hat, R_hat^T e3)."""
    return GammaObserverState(v_hat=s.v_hat, gamma_hat=gravity_direction(s.R_hat))
