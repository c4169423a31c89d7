"""Property suites that mechanically check the observers' claims.

Each suite returns a report dict ``{"suite": name, "passed": bool,
"checks": [{"name", "passed", "detail"}, ...]}``. The CLI runs them with
desk-scale defaults; the acceptance tests run the same code with the
full-scale parameters.

Suites
------
poles       linearization poles: coincident roll/pitch pair, decoupled
            vertical pole, heading pole signs at both equilibria.
lyapunov    seeded random initial errors; per-step descent of the
            variant-1 energy under strict gain-condition gains and of the
            variant-2 energy under gains violating it.
autonomy    two different trajectories, identical initial invariant
            errors: the invariant-error histories must agree, and the gap
            must shrink at better than first order when dt halves.
decoupling  magnetometer bias on/off: reduced-observer traces must be
            bit-identical, full-observer gravity-direction estimates must
            differ only at discretization level, shrinking at better than
            first order when dt halves.
equilibria  perturbations of the three undesired equilibria must escape
            and re-converge to the desired one; perturbations of the
            desired equilibrium must stay bounded.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels as _k
from . import analysis
from .observers import DEFAULT_M_I, ObserverGains
from .simworld import InitialErrors, SensorConfig, TrajectorySpec, run_scenario
from .so3 import exp_rotation, rotation_angle
from .trace import ObserverTrace

__all__ = [
    "SUITES",
    "paper_gains",
    "paper_initial_errors",
    "run_suites",
    "suite_autonomy",
    "suite_decoupling",
    "suite_equilibria",
    "suite_lyapunov",
    "suite_poles",
]

# per-step allowed increase of a Lyapunov value: slack * (1 + L)
LYAP_SLACK = 1e-8


def paper_gains(g: float = 9.81) -> ObserverGains:
    """Stock gain set: velocity gains 1.2, attitude gain exactly on the
    gain-condition boundary (double pole at -1.2), heading gain 2.764."""
    return ObserverGains(k1v=1.2, k2v=1.2, k1r=1.2 * 1.2 / g, k2r=2.764, g=g)


def _check(name: str, passed: bool, detail: str) -> dict:
    return {"name": name, "passed": bool(passed), "detail": detail}


def _report(suite: str, checks: list[dict]) -> dict:
    return {"suite": suite, "passed": all(c["passed"] for c in checks), "checks": checks}


# ---------------------------------------------------------------------------


def suite_poles(
    gains: ObserverGains | None = None, m_I: np.ndarray = DEFAULT_M_I
) -> dict:
    gains = gains or paper_gains()
    rep = analysis.linearized_poles(gains, m_I)
    target = -(gains.k1v + gains.k2v) / 2.0
    checks = [
        _check(
            "rollpitch_double_pole",
            rep.pair_is_double
            and abs(rep.pair_poles[0] - target) <= 1e-9
            and abs(rep.pair_poles[1] - target) <= 1e-9,
            f"poles {rep.pair_poles[0]:.12g}, {rep.pair_poles[1]:.12g} vs {target}",
        ),
        _check(
            "vertical_pole",
            rep.vertical_pole == -gains.k1v,
            f"vertical pole {rep.vertical_pole}",
        ),
        _check(
            "heading_pole_stable_side",
            rep.yaw_pole < 0.0,
            f"heading pole {rep.yaw_pole:.6g} "
            f"(unsquared convention {rep.yaw_pole_unsquared_convention:.6g})",
        ),
        _check(
            "heading_pole_unstable_side",
            rep.yaw_pole_undesired > 0.0 and rep.yaw_pole_undesired == -rep.yaw_pole,
            f"reversed-heading pole +{rep.yaw_pole_undesired:.6g}",
        ),
        _check(
            "discriminant_nonnegative",
            rep.discriminant_sign >= 0,
            f"discriminant {rep.discriminant:.3e} (sign {rep.discriminant_sign})",
        ),
    ]
    return _report("poles", checks)


# ---------------------------------------------------------------------------


def _random_error_state(rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """v_bar within the 20 m/s ball, gamma_bar uniform on the sphere
    excluding a 1e-3 cap around the antipode -e3."""
    v = rng.normal(size=3)
    v *= rng.uniform(0.0, 20.0) / np.linalg.norm(v)
    while True:
        gm = rng.normal(size=3)
        gm /= np.linalg.norm(gm)
        if -gm[2] <= math.cos(1e-3):
            return v, gm


def _descent_holds(
    v0: np.ndarray,
    g0: np.ndarray,
    gains: ObserverGains,
    variant: int,
    lyap,
    dt: float,
    horizon: float,
) -> bool:
    k1v, k2v, k1r, g = gains.k1v, gains.k2v, gains.k1r, gains.g
    v, gm = _k.t3(v0), _k.t3(g0)
    level = lyap(v, gm, k1v, k2v, k1r, g)
    for _ in range(int(round(horizon / dt))):
        v, gm = _k.step_error_gamma(v, gm, k1v, k2v, k1r, g, dt, variant)
        nxt = lyap(v, gm, k1v, k2v, k1r, g)
        if nxt > level + LYAP_SLACK * (1.0 + level):
            return False
        level = nxt
    return True


def suite_lyapunov(
    samples: int = 100,
    seed: int = 7,
    dt: float = 1e-3,
    horizon: float = 5.0,
    g: float = 9.81,
) -> dict:
    strict = ObserverGains(k1v=1.2, k2v=1.2, k1r=0.1, k2r=2.764, g=g)
    violating = ObserverGains(k1v=1.2, k2v=1.2, k1r=1.0, k2r=2.764, g=g)

    lyap1 = lambda v, gm, k1v, k2v, k1r, g: _k.lyap_obs1(v, gm, k1v, k2v, k1r, g)
    lyap2 = lambda v, gm, k1v, k2v, k1r, g: _k.lyap_obs2(v, gm, k1v, k1r, g)

    rng = np.random.default_rng(seed)
    ok1 = 0
    for _ in range(samples):
        v0, g0 = _random_error_state(rng)
        ok1 += _descent_holds(v0, g0, strict, 1, lyap1, dt, horizon)

    rng = np.random.default_rng(seed)
    ok2 = 0
    for _ in range(samples):
        v0, g0 = _random_error_state(rng)
        ok2 += _descent_holds(v0, g0, violating, 2, lyap2, dt, horizon)

    checks = [
        _check(
            "variant1_energy_descends_under_gain_condition",
            ok1 == samples,
            f"{ok1}/{samples} monotone trajectories (k1r=0.1, strict)",
        ),
        _check(
            "variant2_energy_descends_without_gain_condition",
            ok2 == samples,
            f"{ok2}/{samples} monotone trajectories (k1r=1.0, violating)",
        ),
    ]
    return _report("lyapunov", checks)


# ---------------------------------------------------------------------------


def _autonomy_gap(
    gains: ObserverGains, m_I: np.ndarray, dt: float, horizon: float
) -> float:
    spec_a = TrajectorySpec()
    spec_b = TrajectorySpec(
        kind="hover",
        roll_amp=0.2,
        roll_freq=0.9,
        roll_phase=0.3,
        pitch_amp=0.15,
        pitch_freq=1.3,
        pitch_phase=-0.5,
        yaw_rate=0.8,
    )
    init = InitialErrors(
        v_bar=np.array([-3.0, 2.0, -4.0]),
        R_bar=exp_rotation(np.array([0.5, -0.4, 0.3])),
    )
    sensors = SensorConfig()
    kw = dict(observers=("obs1",), duration=horizon, dt=dt, init=init, m_I=m_I)
    tr_a = run_scenario(spec_a, sensors, gains, **kw).observers["obs1"]
    tr_b = run_scenario(spec_b, sensors, gains, **kw).observers["obs1"]
    gap = 0.0
    for k in range(len(tr_a.v_bar)):
        dv = float(np.max(np.abs(tr_a.v_bar[k] - tr_b.v_bar[k])))
        da = rotation_angle(tr_a.R_bar[k] @ tr_b.R_bar[k].T)
        gap = max(gap, dv, da)
    return gap


def suite_autonomy(
    gains: ObserverGains | None = None,
    m_I: np.ndarray = DEFAULT_M_I,
    dt: float = 1e-3,
    horizon: float = 10.0,
    tol: float = 1e-4,
) -> dict:
    """Invariant-error histories must not depend on the flown trajectory."""
    gains = gains or paper_gains()
    gap = _autonomy_gap(gains, m_I, dt, horizon)
    gap_half = _autonomy_gap(gains, m_I, dt / 2.0, horizon)
    ratio = gap / gap_half if gap_half > 0.0 else math.inf
    checks = [
        _check(
            "error_histories_match_across_trajectories",
            gap < tol,
            f"sup gap {gap:.3e} < {tol:.1e} over {horizon} s at dt={dt}",
        ),
        _check(
            "gap_shrinks_superlinearly",
            ratio >= 3.0,
            f"gap ratio dt/(dt/2) = {ratio:.2f} (>= 3 expected)",
        ),
    ]
    return _report("autonomy", checks)


# ---------------------------------------------------------------------------


def _trace_bits_equal(a: ObserverTrace, b: ObserverTrace) -> bool:
    return (
        np.array_equal(a.v_hat, b.v_hat)
        and np.array_equal(a.euler, b.euler, equal_nan=True)
        and np.array_equal(a.gamma_hat, b.gamma_hat)
        and np.array_equal(a.v_tilde_norm, b.v_tilde_norm)
        and np.array_equal(a.att_err, b.att_err)
        and np.array_equal(a.lyap_obs1, b.lyap_obs1)
        and np.array_equal(a.lyap_obs1_boundary, b.lyap_obs1_boundary)
        and np.array_equal(a.lyap_obs2, b.lyap_obs2)
        and np.array_equal(a.eq_label, b.eq_label)
        and np.array_equal(a.v_bar, b.v_bar)
        and np.array_equal(a.gamma_bar, b.gamma_bar)
    )


def _gamma_hat_gap(a: ObserverTrace, b: ObserverTrace) -> float:
    d = a.gamma_hat - b.gamma_hat
    return float(np.max(np.sqrt(np.sum(d * d, axis=1))))


def paper_initial_errors() -> InitialErrors:
    """Stock large initial errors: v_tilde = [-5, 5, -5] m/s and a
    half-turn attitude error diag(-1, 1, -1)."""
    return InitialErrors(
        v_tilde=np.array([-5.0, 5.0, -5.0]),
        R_bar=np.diag([-1.0, 1.0, -1.0]),
    )


def suite_decoupling(
    gains: ObserverGains | None = None,
    m_I: np.ndarray = DEFAULT_M_I,
    dt: float = 1e-3,
    horizon: float = 10.0,
    bias: tuple[float, float, float] = (0.1, -0.05, 0.08),
    gap_tol: float = 1e-3,
) -> dict:
    """Magnetometer errors must not touch the gravity-direction estimates.

    The bias is applied to the inertial field direction so the induced
    heading offset is constant; the reduced observers never read the
    magnetometer, so their traces must match bit for bit.
    """
    gains = gains or paper_gains()
    spec = TrajectorySpec()
    init = paper_initial_errors()
    clean = SensorConfig()
    biased = SensorConfig(mag_bias=bias, mag_bias_frame="inertial")

    kw = dict(duration=horizon, dt=dt, init=init, m_I=m_I)
    all_obs = ("obs1", "obs2", "gamma1", "gamma2")
    ts_c = run_scenario(spec, clean, gains, observers=all_obs, **kw)
    ts_b = run_scenario(spec, biased, gains, observers=all_obs, **kw)

    checks = []
    for kind in ("gamma1", "gamma2"):
        checks.append(
            _check(
                f"{kind}_trace_bit_identical_under_bias",
                _trace_bits_equal(ts_c.observers[kind], ts_b.observers[kind]),
                "reduced-observer trace unchanged by magnetometer bias",
            )
        )

    kw_half = dict(duration=horizon, dt=dt / 2.0, init=init, m_I=m_I)
    full = ("obs1", "obs2")
    ts_c2 = run_scenario(spec, clean, gains, observers=full, **kw_half)
    ts_b2 = run_scenario(spec, biased, gains, observers=full, **kw_half)
    for kind in full:
        gap = _gamma_hat_gap(ts_c.observers[kind], ts_b.observers[kind])
        gap_half = _gamma_hat_gap(ts_c2.observers[kind], ts_b2.observers[kind])
        ratio = gap / gap_half if gap_half > 0.0 else math.inf
        checks.append(
            _check(
                f"{kind}_gravity_estimate_gap_small",
                gap < gap_tol,
                f"sup |gamma_hat(biased) - gamma_hat(clean)| = {gap:.3e} < {gap_tol:.0e}",
            )
        )
        checks.append(
            _check(
                f"{kind}_gap_shrinks_superlinearly",
                ratio >= 3.0,
                f"gap ratio dt/(dt/2) = {ratio:.2f} (>= 3 expected)",
            )
        )
    return _report("decoupling", checks)


# ---------------------------------------------------------------------------


def _metric_to(
    v: np.ndarray, R: np.ndarray, v_star: np.ndarray, R_star: np.ndarray
) -> float:
    return float(np.linalg.norm(v - v_star)) + rotation_angle(R @ R_star.T)


def suite_equilibria(
    gains: ObserverGains | None = None,
    m_I: np.ndarray = DEFAULT_M_I,
    samples_per_eq: int = 20,
    seed: int = 11,
    dt: float = 1e-2,
    escape_horizon: float = 20.0,
    converge_horizon: float = 120.0,
    perturbation: float = 1e-3,
    escape_dist: float = 0.1,
    converge_dist: float = 0.01,
    stable_factor: float = 10.0,
) -> dict:
    """Instability of the three undesired equilibria, stability of (0, I).

    Every perturbed undesired equilibrium must leave its ``escape_dist``
    neighborhood within ``escape_horizon`` seconds and re-converge to the
    desired equilibrium by ``converge_horizon``; perturbations of the
    desired one must never grow past ``stable_factor`` times their size.
    """
    gains = gains or paper_gains()
    m_In = np.asarray(m_I, dtype=float)
    m_In = m_In / np.linalg.norm(m_In)
    eqset = analysis.equilibria(gains, m_In)
    rng = np.random.default_rng(seed)

    def perturb(v_star: np.ndarray, R_star: np.ndarray):
        d = rng.normal(size=6)
        d *= perturbation / np.linalg.norm(d)
        return v_star + d[:3], exp_rotation(d[3:]) @ R_star

    checks = []
    n_escape = int(round(escape_horizon / dt))
    n_total = int(round(converge_horizon / dt))
    v0_star, R0_star = eqset.pairs[0]
    for label in (1, 2, 3):
        v_star, R_star = eqset.pairs[label]
        escaped_all, converged_all = True, True
        for _ in range(samples_per_eq):
            v, R = perturb(v_star, R_star)
            escaped = False
            for k in range(n_total):
                v, R = analysis.step_error_full(v, R, gains, m_In, dt, 1)
                if not escaped and k < n_escape:
                    escaped = _metric_to(v, R, v_star, R_star) > escape_dist
            escaped_all &= escaped
            converged_all &= _metric_to(v, R, v0_star, R0_star) <= converge_dist
        checks.append(
            _check(
                f"equilibrium_{label}_unstable",
                escaped_all,
                f"{samples_per_eq} perturbations ({perturbation:.0e}) all escaped "
                f"{escape_dist} within {escape_horizon} s",
            )
        )
        checks.append(
            _check(
                f"equilibrium_{label}_reconverges",
                converged_all,
                f"all within {converge_dist} of the desired equilibrium "
                f"by {converge_horizon} s",
            )
        )

    stable_ok = True
    worst = 0.0
    for _ in range(samples_per_eq):
        v, R = perturb(v0_star, R0_star)
        d0 = _metric_to(v, R, v0_star, R0_star)
        peak = d0
        for _ in range(n_escape):
            v, R = analysis.step_error_full(v, R, gains, m_In, dt, 1)
            peak = max(peak, _metric_to(v, R, v0_star, R0_star))
        worst = max(worst, peak / d0)
        stable_ok &= peak <= stable_factor * d0
    checks.append(
        _check(
            "desired_equilibrium_stable",
            stable_ok,
            f"worst transient growth {worst:.2f}x (< {stable_factor}x)",
        )
    )
    return _report("equilibria", checks)


# ---------------------------------------------------------------------------

SUITES = {
    "poles": suite_poles,
    "lyapunov": suite_lyapunov,
    "autonomy": suite_autonomy,
    "decoupling": suite_decoupling,
    "equilibria": suite_equilibria,
}


def run_suites(
    names: list[str],
    samples: int | None = None,
    seed: int | None = None,
    dt: float | None = None,
) -> dict:
    """Run the named suites with CLI-scale defaults; returns the combined
    report. ``samples``, ``seed`` and ``dt`` override where meaningful."""
    reports = []
    for name in names:
        kwargs = {}
        if name == "lyapunov":
            if samples is not None:
                kwargs["samples"] = samples
            if seed is not None:
                kwargs["seed"] = seed
            if dt is not None:
                kwargs["dt"] = dt
        elif name == "equilibria":
            kwargs["samples_per_eq"] = samples if samples is not None else 5
            if seed is not None:
                kwargs["seed"] = seed
            if dt is not None:
                kwargs["dt"] = dt
        elif name in ("autonomy", "decoupling") and dt is not None:
            kwargs["dt"] = dt
        reports.append(SUITES[name](**kwargs))
    return {"passed": all(r["passed"] for r in reports), "suites": reports}
