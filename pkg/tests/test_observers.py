from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import random_rotation, random_unit
from velaid import _kernels as _k
from velaid.observers import (
    DEFAULT_M_I,
    FullObserverState,
    GammaObserverState,
    MeasurementFrame,
    ObserverGains,
    innovation_obs1,
    innovation_obs2,
    reduce_to_gamma,
    step_full,
    step_gamma,
    validate_gains,
)
from velaid.simworld import SensorConfig, TrajectorySpec, measure, truth_at
from velaid.so3 import E3, gravity_direction, rotation_defect

M_I = DEFAULT_M_I / np.linalg.norm(DEFAULT_M_I)


def _frame(omega, a_B, m_B, v_meas, t=0.0):
    return MeasurementFrame(
        t=t,
        omega=np.asarray(omega, dtype=float),
        a_B=np.asarray(a_B, dtype=float),
        m_B=np.asarray(m_B, dtype=float),
        v_meas=np.asarray(v_meas, dtype=float),
    )


class TestGains:
    def test_boundary_gains_satisfy_condition_with_equality(self, paper_gains):
        assert paper_gains.all_positive
        assert paper_gains.satisfies_gain_condition
        assert paper_gains.gain_condition_margin == 0.0

    def test_rounded_attitude_gain_violates_condition(self):
        # 0.147 overshoots 1.44/9.81 = 0.146789... by 2.11e-4
        gains = ObserverGains(k1v=1.2, k2v=1.2, k1r=0.147, k2r=2.764, g=9.81)
        rep = validate_gains(gains)
        assert rep.valid and rep.all_positive
        assert not rep.gain_condition_satisfied
        assert math.isclose(rep.gain_condition_margin, -2.110091743119380e-4, rel_tol=1e-9)

    def test_strictly_inside(self):
        rep = validate_gains(ObserverGains(k1v=1.0, k2v=1.0, k1r=0.01, k2r=1.0, g=9.81))
        assert rep.gain_condition_satisfied and rep.gain_condition_margin > 0.0

    def test_non_positive_gain_reports_invalid_without_raising(self):
        rep = validate_gains(ObserverGains(k1v=-1.0, k2v=1.0, k1r=0.1, k2r=1.0))
        assert not rep.valid
        assert rep.positive == {"k1v": False, "k2v": True, "k1r": True, "k2r": True}

    def test_discriminant(self, paper_gains):
        rep = validate_gains(paper_gains)
        # boundary gains make the pair poles coincide: discriminant ~ 0
        assert abs(rep.discriminant) <= 1e-12
        rep2 = validate_gains(ObserverGains(k1v=1.0, k2v=1.0, k1r=1.0, k2r=1.0, g=9.81))
        assert rep2.discriminant_sign == -1


class TestInnovations:
    def test_zero_errors_kill_every_term(self, paper_gains, rng):
        R = random_rotation(rng)
        v = rng.normal(size=3)
        s = FullObserverState(v_hat=v, R_hat=R)
        m = _frame(rng.normal(size=3), rng.normal(size=3), R.T @ M_I, v)
        for innov in (innovation_obs1, innovation_obs2):
            sv, sR = innov(s, m, paper_gains, M_I)
            assert np.array_equal(sv, np.zeros(3))
            assert np.array_equal(sR, np.zeros(3))

    def test_hand_expanded_velocity_error(self):
        # identity attitude, v error [1,0,0]: sv = (k1v + k2v) e1,
        # sR = k1r ([1,0,0] x e3) = [0, -k1r, 0]
        gains = ObserverGains(k1v=1.2, k2v=1.2, k1r=0.147, k2r=2.764, g=9.81)
        s = FullObserverState(v_hat=np.zeros(3), R_hat=np.eye(3))
        m = _frame(np.zeros(3), np.zeros(3), M_I, [1.0, 0.0, 0.0])
        sv, sR = innovation_obs1(s, m, gains, M_I)
        np.testing.assert_allclose(sv, [2.4, 0.0, 0.0], atol=1e-15)
        np.testing.assert_allclose(sR, [0.0, -0.147, 0.0], atol=1e-15)

    def test_aligned_field_kills_heading_term(self, paper_gains, rng):
        s = FullObserverState(v_hat=rng.normal(size=3), R_hat=np.eye(3))
        m = _frame(np.zeros(3), np.zeros(3), M_I, s.v_hat + rng.normal(size=3))
        sv1, sR1 = innovation_obs1(s, m, paper_gains, M_I)
        # m_B x m_hat_B = 0, so sigma_R reduces to the velocity coupling
        vt = m.v_meas - s.v_hat
        np.testing.assert_allclose(sR1, paper_gains.k1r * np.cross(vt, E3), atol=1e-15)

    def test_quadratic_term_against_symbolic_oracle(self):
        sympy = pytest.importorskip("sympy")
        k1r = sympy.Rational(147, 1000)
        vt = sympy.Matrix([1, 0, 0])
        gh = sympy.Matrix([0, 0, 1])
        quad = -k1r * vt.cross(vt.cross(gh))
        gains = ObserverGains(k1v=1.2, k2v=1.2, k1r=0.147, k2r=2.764, g=9.81)
        s = FullObserverState(v_hat=np.zeros(3), R_hat=np.eye(3))
        m = _frame(np.zeros(3), np.zeros(3), M_I, [1.0, 0.0, 0.0])
        sv1, sR1 = innovation_obs1(s, m, gains, M_I)
        sv2, sR2 = innovation_obs2(s, m, gains, M_I)
        np.testing.assert_allclose(
            sv2 - sv1, np.array(quad.T, dtype=float).ravel(), atol=1e-15
        )
        assert np.array_equal(sR1, sR2)

    def test_parallel_error_collapses_variants(self, paper_gains, rng):
        # v error parallel to the gravity estimate: the quadratic term is 0
        R = random_rotation(rng)
        gh = gravity_direction(R)
        v_hat = rng.normal(size=3)
        m = _frame(rng.normal(size=3), rng.normal(size=3), rng.normal(size=3), v_hat + 2.5 * gh)
        s = FullObserverState(v_hat=v_hat, R_hat=R)
        sv1, sR1 = innovation_obs1(s, m, paper_gains, M_I)
        sv2, sR2 = innovation_obs2(s, m, paper_gains, M_I)
        np.testing.assert_allclose(sv1, sv2, atol=1e-12)
        assert np.array_equal(sR1, sR2)

    def test_heading_term_is_parallel_to_gravity_estimate(self, rng):
        # the magnetometer contribution is a scalar multiple of the gravity
        # estimate by construction, so it can never tilt it; with the
        # velocity coupling gain zeroed, sigma_R is exactly that multiple
        gains = ObserverGains(k1v=1.2, k2v=1.2, k1r=1e-300, k2r=2.764, g=9.81)
        for _ in range(50):
            R = random_rotation(rng)
            gh = gravity_direction(R)
            s = FullObserverState(v_hat=rng.normal(size=3), R_hat=R)
            m = _frame(rng.normal(size=3), rng.normal(size=3), rng.normal(size=3), rng.normal(size=3))
            _, sR = innovation_obs1(s, m, gains, M_I)
            from velaid.so3 import cross as _cross

            c = float(np.dot(_cross(m.m_B, R.T @ M_I), gh))
            assert np.array_equal(sR, (gains.k2r * c) * gh)
            # parallel within one rounding of each component
            resid = np.cross(sR, gh)
            assert np.abs(resid).max() <= 1e-15 * (1.0 + np.abs(sR).max())


class TestStepFull:
    def test_rejects_bad_arguments(self, paper_gains):
        s = FullObserverState(np.zeros(3), np.eye(3))
        m = _frame(np.zeros(3), np.zeros(3), M_I, np.zeros(3))
        with pytest.raises(ValueError):
            step_full(s, m, paper_gains, M_I, 0.0)
        with pytest.raises(ValueError):
            step_full(s, m, paper_gains, M_I, -1e-3)
        with pytest.raises(ValueError):
            step_full(s, m, paper_gains, M_I, 1e-3, variant=3)

    def test_zero_error_hover_is_exact(self, paper_gains):
        # constant measurements + zero errors: innovations vanish at every
        # stage and the step reproduces the truth exactly
        s = FullObserverState(np.zeros(3), np.eye(3))
        m = _frame(np.zeros(3), [0.0, 0.0, -paper_gains.g], M_I, np.zeros(3))
        out = step_full(s, m, paper_gains, M_I, 1e-3)
        assert np.abs(out.v_hat).max() <= 1e-15
        np.testing.assert_allclose(out.R_hat, np.eye(3), atol=1e-15)

    def test_zero_error_spin_tracks_truth(self, paper_gains):
        # constant body rate about e3 with matching gravity: the velocity
        # and gravity-direction estimates are invariant to the last bit
        # (every stage innovation acts about e3) and the yaw tracks the
        # true rotation to discretization accuracy
        from velaid.so3 import euler_from_rotation, exp_rotation

        w = np.array([0.0, 0.0, 0.8])
        out = FullObserverState(np.zeros(3), np.eye(3))
        dt = 1e-3
        for k in range(100):
            R_true = exp_rotation((k + 0.5) * dt * w)
            m = _frame(w, [0.0, 0.0, -paper_gains.g], R_true.T @ M_I, np.zeros(3))
            out = step_full(out, m, paper_gains, M_I, dt)
        assert np.array_equal(out.v_hat, np.zeros(3))
        assert np.array_equal(gravity_direction(out.R_hat), E3)
        yaw = euler_from_rotation(out.R_hat).yaw
        assert abs(yaw - 0.08) <= 1e-9

    def test_golden_first_step_from_stock_initial_errors(self, paper_gains):
        # frozen after validating third-order step-halving convergence and
        # agreement with a 64-substep reference of the same held-measurement
        # flow (5.5e-10 away)
        spec = TrajectorySpec()
        truth0 = truth_at(spec, 0.0)
        s0 = FullObserverState(
            truth0.v - np.array([-5.0, 5.0, -5.0]),
            np.diag([-1.0, 1.0, -1.0]).T @ truth0.R,
        )
        m = measure(truth_at(spec, 5e-4), SensorConfig(), M_I, paper_gains.g)
        s1 = step_full(s0, m, paper_gains, M_I, 1e-3, 1)
        golden_v = np.array([4.988218461758428, 2.755789385098963, 4.972722887761945])
        golden_R = np.array(
            [
                [-0.9781156545436775, 0.0004752906022801314, -0.20806138621915593],
                [0.00035456359745666017, 0.9999997464643269, 0.0006175402313141345],
                [0.2080616269792408, 0.0005302547739691867, -0.9781155750772125],
            ]
        )
        np.testing.assert_allclose(s1.v_hat, golden_v, rtol=0, atol=1e-12)
        np.testing.assert_allclose(s1.R_hat, golden_R, rtol=0, atol=1e-12)

    def test_step_halving_is_third_order_locally(self, paper_gains):
        # one macro-interval with the measurement held: halving the step
        # shrinks the self-difference by ~8 (locally third-order scheme)
        spec = TrajectorySpec()
        truth0 = truth_at(spec, 0.0)
        s0 = FullObserverState(
            truth0.v - np.array([-5.0, 5.0, -5.0]),
            np.diag([-1.0, 1.0, -1.0]).T @ truth0.R,
        )
        m = measure(truth_at(spec, 5e-3), SensorConfig(), M_I, paper_gains.g)

        def dist(a, b):
            return np.linalg.norm(a.v_hat - b.v_hat) + np.abs(a.R_hat - b.R_hat).max()

        diffs = []
        for H in (0.02, 0.01, 0.005):
            one = step_full(s0, m, paper_gains, M_I, H, 1)
            two = step_full(step_full(s0, m, paper_gains, M_I, H / 2, 1), m, paper_gains, M_I, H / 2, 1)
            diffs.append(dist(one, two))
        assert diffs[0] / diffs[1] >= 7.0
        assert diffs[1] / diffs[2] >= 7.0

    def test_rotation_invariant_over_long_kernel_run(self, paper_gains):
        # one million consecutive steps at dt=1e-3 with the scenario-runner
        # repair policy: the orthonormality defect never exceeds 1e-9
        spec = TrajectorySpec()
        truth0 = truth_at(spec, 0.0)
        m = measure(truth_at(spec, 5e-4), SensorConfig(), M_I, paper_gains.g)
        v = _k.t3(truth0.v - np.array([-5.0, 5.0, -5.0]))
        R = _k.t9(np.diag([-1.0, 1.0, -1.0]).T @ truth0.R)
        args = (
            _k.t3(m.omega), _k.t3(m.a_B), _k.t3(m.m_B), _k.t3(m.v_meas), _k.t3(M_I),
            paper_gains.k1v, paper_gains.k2v, paper_gains.k1r, paper_gains.k2r,
            paper_gains.g, 1e-3, 1,
        )
        from velaid.so3 import orthonormalize

        worst = 0.0
        for k in range(1_000_000):
            v, R = _k.step_full(v, R, *args)
            if (k + 1) % 100 == 0:
                worst = max(worst, _k.frobenius_defect(R))
                R = _k.t9(orthonormalize(_k.a9(R)))
        assert worst <= 1e-9

    def test_public_step_keeps_rotation_invariant(self, paper_gains):
        spec = TrajectorySpec()
        truth0 = truth_at(spec, 0.0)
        s = FullObserverState(
            truth0.v - np.array([-5.0, 5.0, -5.0]),
            np.diag([-1.0, 1.0, -1.0]).T @ truth0.R,
        )
        cfg = SensorConfig()
        for k in range(5000):
            m = measure(truth_at(spec, (k + 0.5) * 1e-3), cfg, M_I, paper_gains.g)
            s = step_full(s, m, paper_gains, M_I, 1e-3, 1)
        assert rotation_defect(s.R_hat) <= 1e-9


class TestStepGamma:
    def test_rejects_bad_arguments(self, paper_gains):
        s = GammaObserverState(np.zeros(3), E3.copy())
        m = _frame(np.zeros(3), np.zeros(3), M_I, np.zeros(3))
        with pytest.raises(ValueError):
            step_gamma(s, m, paper_gains, 0.0)
        with pytest.raises(ValueError):
            step_gamma(s, m, paper_gains, 1e-3, variant=0)

    def test_unit_norm_preserved(self, paper_gains, rng):
        s = GammaObserverState(rng.normal(size=3), random_unit(rng))
        for _ in range(200):
            m = _frame(rng.normal(size=3), rng.normal(size=3), rng.normal(size=3), rng.normal(size=3))
            s = step_gamma(s, m, paper_gains, 1e-3, 1)
            assert abs(np.linalg.norm(s.gamma_hat) - 1.0) <= 1e-12

    def test_magnetometer_channel_is_never_read(self, paper_gains, rng):
        # frames differing only in m_B produce bit-identical steps
        s = GammaObserverState(rng.normal(size=3), random_unit(rng))
        base = dict(
            t=0.0, omega=rng.normal(size=3), a_B=rng.normal(size=3), v_meas=rng.normal(size=3)
        )
        for variant in (1, 2):
            a = step_gamma(s, MeasurementFrame(m_B=rng.normal(size=3), **base), paper_gains, 1e-3, variant)
            b = step_gamma(s, MeasurementFrame(m_B=rng.normal(size=3) * 100, **base), paper_gains, 1e-3, variant)
            assert np.array_equal(a.v_hat, b.v_hat)
            assert np.array_equal(a.gamma_hat, b.gamma_hat)

    def test_zero_error_follows_kinematics(self, paper_gains):
        # with perfect estimates the direction rotates by the body rates only
        spec = TrajectorySpec()
        truth0 = truth_at(spec, 0.0)
        s = GammaObserverState(truth0.v.copy(), gravity_direction(truth0.R))
        cfg = SensorConfig()
        for k in range(1000):
            m = measure(truth_at(spec, (k + 0.5) * 1e-3), cfg, M_I, paper_gains.g)
            s = step_gamma(s, m, paper_gains, 1e-3, 1)
        truth1 = truth_at(spec, 1.0)
        np.testing.assert_allclose(s.gamma_hat, gravity_direction(truth1.R), atol=1e-6)
        np.testing.assert_allclose(s.v_hat, truth1.v, atol=1e-6)

    def test_consistency_with_full_observer(self, paper_gains):
        # the reduced observer tracks R_hat^T e3 of the full one within
        # C*dt over 10 s (C frozen from measurement: 1.5e-4 at dt=1e-3),
        # and the gap shrinks ~quadratically when dt halves
        from velaid.simworld import run_scenario
        from velaid.verify import paper_initial_errors

        spec = TrajectorySpec()
        init = paper_initial_errors()

        def gap(dt):
            ts = run_scenario(
                spec, SensorConfig(), paper_gains,
                observers=("obs1", "gamma1"), duration=10.0, dt=dt, init=init,
            )
            a = ts.observers["obs1"].gamma_hat
            b = ts.observers["gamma1"].gamma_hat
            return float(np.max(np.linalg.norm(a - b, axis=1)))

        g1, g2 = gap(1e-3), gap(5e-4)
        assert g1 <= 2e-4 * 1e-3 / 1e-3  # C = 2e-4 at dt = 1e-3
        assert 3.0 <= g1 / g2 <= 5.0


class TestReduceToGamma:
    def test_identity(self):
        s = FullObserverState(np.zeros(3), np.eye(3))
        assert np.array_equal(reduce_to_gamma(s).gamma_hat, E3)

    def test_half_turn(self):
        s = FullObserverState(np.zeros(3), np.diag([-1.0, 1.0, -1.0]))
        assert np.array_equal(reduce_to_gamma(s).gamma_hat, -E3)

    def test_unit_norm(self, rng):
        for _ in range(100):
            s = FullObserverState(rng.normal(size=3), random_rotation(rng))
            assert abs(np.linalg.norm(reduce_to_gamma(s).gamma_hat) - 1.0) <= 1e-12
