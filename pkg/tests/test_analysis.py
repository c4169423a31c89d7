from __future__ import annotations

import math

import numpy as np
import pytest

from conftest import random_rotation, random_unit
from velaid import analysis
from velaid.observers import DEFAULT_M_I, FullObserverState, ObserverGains
from velaid.simworld import TrajectorySpec, truth_at
from velaid.so3 import E1, E2, E3, exp_rotation, rotation_angle

M_I = DEFAULT_M_I / np.linalg.norm(DEFAULT_M_I)


def _random_error(rng, vmax=20.0):
    v = rng.normal(size=3)
    v *= rng.uniform(0.0, vmax) / np.linalg.norm(v)
    return v, random_unit(rng)


class TestHeadingFrame:
    def test_stock_field_values(self):
        R_alpha, m_bar, alpha = analysis.heading_frame(DEFAULT_M_I)
        assert math.isclose(alpha, math.atan2(-0.0091, 0.434), rel_tol=1e-12)
        np.testing.assert_allclose(
            m_bar, [0.9997802493558114, -0.02096313426068637, 0.0], atol=1e-12
        )
        np.testing.assert_allclose(R_alpha @ E1, m_bar, atol=1e-15)
        assert np.array_equal(R_alpha @ E3, E3)

    def test_vertical_field_rejected(self):
        with pytest.raises(ValueError):
            analysis.heading_frame(np.array([0.0, 0.0, 1.0]))


class TestInvariantErrors:
    def test_perfect_estimate_gives_zero_errors(self, paper_gains, rng):
        tr = truth_at(TrajectorySpec(), 3.0)
        est = FullObserverState(tr.v.copy(), tr.R.copy())
        e = analysis.invariant_errors(tr, est, paper_gains)
        assert np.abs(e.v_bar).max() <= 1e-15
        np.testing.assert_allclose(e.R_bar, np.eye(3), atol=1e-15)
        assert e.attitude_error_angle <= 1e-7
        assert np.abs(e.delta).max() <= 1e-14

    def test_attitude_error_is_conjugated_half_turn(self, paper_gains):
        # R_hat = R D makes R_bar = R R_hat^T = R D R^T; verify against the
        # direct matrix product
        tr = truth_at(TrajectorySpec(), 1.0)
        D = np.diag([-1.0, 1.0, -1.0])
        e = analysis.invariant_errors(tr, FullObserverState(tr.v, tr.R @ D), paper_gains)
        np.testing.assert_allclose(e.R_bar, tr.R @ D @ tr.R.T, atol=1e-13)

    def test_eta_at_identity(self, paper_gains):
        tr = truth_at(TrajectorySpec(), 0.0)
        e = analysis.invariant_errors(
            tr, FullObserverState(tr.v.copy(), tr.R.copy()), paper_gains
        )
        np.testing.assert_allclose(e.eta, E1, atol=1e-12)

    def test_vertical_field_rejected(self, paper_gains):
        tr = truth_at(TrajectorySpec(), 0.0)
        est = FullObserverState(tr.v.copy(), tr.R.copy())
        with pytest.raises(ValueError):
            analysis.invariant_errors(tr, est, paper_gains, m_I=np.array([0, 0, 2.0]))

    def test_gamma_errors(self, paper_gains):
        from velaid.observers import GammaObserverState

        tr = truth_at(TrajectorySpec(), 2.0)
        est = GammaObserverState(tr.v.copy(), (tr.R.T @ E3))
        e = analysis.gamma_invariant_errors(tr, est, paper_gains)
        assert e.R_bar is None and e.eta is None
        np.testing.assert_allclose(e.gamma_bar, E3, atol=1e-14)
        assert e.attitude_error_angle <= 1e-6


class TestLyapunovValues:
    def test_zero_at_desired_equilibrium(self, paper_gains):
        e = analysis.make_error_state(np.zeros(3), paper_gains, gamma_bar=E3.copy())
        assert analysis.lyapunov_obs1(e, paper_gains) == 0.0
        assert analysis.lyapunov_obs1_boundary(e, paper_gains) == 0.0
        assert analysis.lyapunov_obs2(e, paper_gains) == 0.0

    def test_boundary_energy_vanishes_at_undesired_equilibrium(self, paper_gains):
        # with the gain condition holding with equality, the variant-1
        # energy is only positive-semidefinite: it vanishes at the
        # undesired equilibrium too (expansion 2g^2/k1v^2 + 2 g k2v /
        # (k1v k1r) - 4 g^2/k1v^2 = 0 at k1r = k1v k2v / g)
        g, k1v = paper_gains.g, paper_gains.k1v
        v = (2.0 * g / k1v) * E3
        e = analysis.make_error_state(v, paper_gains, gamma_bar=-E3)
        assert abs(analysis.lyapunov_obs1(e, paper_gains)) <= 1e-12

    def test_boundary_energy_value_at_flipped_gravity(self, paper_gains):
        g, k1v, k1r = paper_gains.g, paper_gains.k1v, paper_gains.k1r
        v = (g / k1v) * (E3 - (-E3))  # delta = 0
        e = analysis.make_error_state(v, paper_gains, gamma_bar=-E3)
        assert np.abs(e.delta).max() == 0.0
        assert math.isclose(
            analysis.lyapunov_obs1_boundary(e, paper_gains), 4.0 * g / k1r, rel_tol=1e-12
        )

    def test_positive_definite_under_strict_gains(self, strict_gains, rng):
        for _ in range(1000):
            v, gm = _random_error(rng)
            if np.linalg.norm(v) < 1e-12 and gm[2] > 1.0 - 1e-12:
                continue
            e = analysis.make_error_state(v, strict_gains, gamma_bar=gm)
            assert analysis.lyapunov_obs1(e, strict_gains) > 0.0

    def test_boundary_energy_nonnegative(self, paper_gains, rng):
        for _ in range(1000):
            v, gm = _random_error(rng)
            e = analysis.make_error_state(v, paper_gains, gamma_bar=gm)
            val = analysis.lyapunov_obs1_boundary(e, paper_gains)
            assert val >= 0.0
            if val == 0.0:
                assert np.abs(e.delta).max() <= 1e-12 and gm[2] >= 1.0 - 1e-12

    def test_cross_energy_examples(self):
        gains = ObserverGains(k1v=1.2, k2v=1.2, k1r=0.1468, k2r=2.764, g=9.81)
        e = analysis.make_error_state(np.array([1.0, 0, 0]), gains, gamma_bar=E3.copy())
        assert analysis.lyapunov_obs2(e, gains) == 0.5
        # degenerate along gamma: any parallel velocity error is invisible
        e2 = analysis.make_error_state(np.array([0.0, 0, 37.0]), gains, gamma_bar=E3.copy())
        assert analysis.lyapunov_obs2(e2, gains) == 0.0


class TestGammaErrorField:
    def test_exact_zero_at_both_equilibria(self, paper_gains):
        v_up = (2.0 * paper_gains.g / paper_gains.k1v) * E3
        for variant in (1, 2):
            e0 = analysis.make_error_state(np.zeros(3), paper_gains, gamma_bar=E3.copy())
            vd, gd = analysis.gamma_error_field(e0, paper_gains, variant)
            assert np.array_equal(vd, np.zeros(3)) and np.array_equal(gd, np.zeros(3))
            e1 = analysis.make_error_state(v_up, paper_gains, gamma_bar=-E3)
            vd, gd = analysis.gamma_error_field(e1, paper_gains, variant)
            assert np.array_equal(vd, np.zeros(3)) and np.array_equal(gd, np.zeros(3))

    def test_variant1_rate_matches_closed_form(self, strict_gains, rng):
        for _ in range(1000):
            v, gm = _random_error(rng)
            e = analysis.make_error_state(v, strict_gains, gamma_bar=gm)
            assert abs(
                analysis.lyapunov_obs1_rate(e, strict_gains)
                - analysis.lyapunov_obs1_rate_closed(e, strict_gains)
            ) <= 1e-10

    def test_variant2_rate_matches_closed_form(self, rng):
        gains = ObserverGains(k1v=1.2, k2v=1.2, k1r=1.0, k2r=2.764, g=9.81)
        for _ in range(1000):
            v, gm = _random_error(rng)
            e = analysis.make_error_state(v, gains, gamma_bar=gm)
            assert abs(
                analysis.lyapunov_obs2_rate(e, gains)
                - analysis.lyapunov_obs2_rate_closed(e, gains)
            ) <= 1e-10

    def test_cross_product_rate_identity(self, paper_gains, rng):
        for _ in range(1000):
            v, gm = _random_error(rng)
            e = analysis.make_error_state(v, paper_gains, gamma_bar=gm)
            analytic, closed = analysis.cross_error_rate(e, paper_gains)
            assert np.abs(analytic - closed).max() <= 1e-10


class TestEquilibria:
    def test_first_is_identity(self, paper_gains):
        eq = analysis.equilibria(paper_gains)
        v0, R0 = eq.pairs[0]
        assert np.array_equal(v0, np.zeros(3)) and np.array_equal(R0, np.eye(3))

    def test_velocity_offsets(self, paper_gains):
        eq = analysis.equilibria(paper_gains)
        np.testing.assert_allclose(eq.pairs[2][0], [0.0, 0.0, 16.35], atol=1e-12)
        assert np.array_equal(eq.pairs[1][0], np.zeros(3))

    def test_gravity_axis_pattern(self, paper_gains):
        eq = analysis.equilibria(paper_gains)
        signs = [1.0, 1.0, -1.0, -1.0]
        for (v, R), s in zip(eq.pairs, signs):
            assert np.array_equal(R @ E3, s * E3)

    def test_all_are_rotations(self, paper_gains):
        from velaid.so3 import rotation_defect

        eq = analysis.equilibria(paper_gains)
        for _, R in eq.pairs:
            assert rotation_defect(R) <= 1e-12
            assert abs(np.linalg.det(R) - 1.0) <= 1e-12

    def test_field_vanishes_at_all_equilibria(self, paper_gains):
        # the undesired pairs also null the full error field including the
        # heading term
        eq = analysis.equilibria(paper_gains)
        for v, R in eq.pairs:
            vd, sR = analysis.error_field_full(v, R, paper_gains, M_I, 1)
            assert np.abs(vd).max() <= 1e-12
            assert np.abs(sR).max() <= 1e-12

    def test_collinear_field_rejected(self, paper_gains):
        with pytest.raises(ValueError):
            analysis.equilibria(paper_gains, m_I=np.array([0.0, 0.0, 1.0]))


class TestClassify:
    def test_exact_equilibria(self, paper_gains):
        eq = analysis.equilibria(paper_gains)
        for label, (v, R) in enumerate(eq.pairs):
            e = analysis.make_error_state(v, paper_gains, R_bar=R)
            c = analysis.classify_equilibrium(e, eq)
            assert c.label == label
            assert c.distance <= 1e-7

    def test_small_perturbation_keeps_label_and_distance(self, paper_gains):
        eq = analysis.equilibria(paper_gains)
        v, R = eq.pairs[0]
        dv = 1e-3 * np.array([1.0, 0.0, 0.0])
        e = analysis.make_error_state(v + dv, paper_gains, R_bar=R)
        c = analysis.classify_equilibrium(e, eq, tol=1e-2)
        assert c.label == 0
        assert math.isclose(c.distance, 1e-3, rel_tol=1e-6)
        assert c.within_tol is True

    def test_reduced_classifier(self, paper_gains):
        c = analysis.classify_gamma_equilibrium(np.zeros(3), E3, paper_gains)
        assert c.label == 0 and c.distance == 0.0
        v_up = (2 * paper_gains.g / paper_gains.k1v) * E3
        c = analysis.classify_gamma_equilibrium(v_up, -E3, paper_gains)
        assert c.label == 1 and c.distance == 0.0


class TestPoles:
    def test_double_pole_at_boundary_gains(self, paper_gains):
        rep = analysis.linearized_poles(paper_gains)
        assert rep.pair_is_double
        assert rep.pair_poles[0] == -1.2 and rep.pair_poles[1] == -1.2
        assert rep.vertical_pole == -1.2
        assert rep.discriminant_sign == 0

    def test_heading_pole_conventions(self, paper_gains):
        rep = analysis.linearized_poles(paper_gains)
        assert math.isclose(rep.yaw_pole, -0.5209, rel_tol=1e-3)
        # the unsquared-norm convention explains the stock 2.764 tuning:
        # 2.764 * |horizontal part| = 1.19991 ~ 1.2
        assert math.isclose(rep.yaw_pole_unsquared_convention, -1.2, rel_tol=1e-3)
        assert rep.yaw_pole_undesired == -rep.yaw_pole > 0.0

    def test_complex_pair_when_condition_violated(self):
        gains = ObserverGains(k1v=1.0, k2v=1.0, k1r=1.0, k2r=1.0, g=9.81)
        assert not gains.satisfies_gain_condition
        rep = analysis.linearized_poles(gains)
        assert rep.discriminant_sign == -1
        assert abs(rep.pair_poles[0].imag) > 0.0
        assert rep.pair_poles[0].real == -1.0

    def test_vanishing_attitude_gain_limit(self):
        gains = ObserverGains(k1v=1.0, k2v=1.4, k1r=1e-12, k2r=1.0, g=9.81)
        rep = analysis.linearized_poles(gains)
        roots = sorted(rep.pair_poles, key=lambda p: p.real)
        assert abs(roots[1]) <= 1e-9
        assert abs(roots[0] + 2.4) <= 1e-9


class TestEtaDynamics:
    def test_heading_zero_dynamics_reduction(self, paper_gains, rng):
        # at v_bar = 0 with gravity aligned (R_bar a yaw rotation about e3,
        # conjugated into the declination frame), the full error field
        # reduces to d(eta)/dt = -k2r_eff (e2 . eta) e3 x eta
        R_alpha, m_bar, _ = analysis.heading_frame(M_I)
        h2 = float(M_I[0]) ** 2 + float(M_I[1]) ** 2
        k2r_eff = paper_gains.k2r * h2
        for _ in range(50):
            theta = rng.uniform(-math.pi, math.pi)
            R_bar = R_alpha @ exp_rotation(np.array([0.0, 0.0, theta])) @ R_alpha.T
            _, sR = analysis.error_field_full(
                np.zeros(3), R_bar, paper_gains, M_I, 1
            )
            eta = R_alpha.T @ R_bar @ R_alpha[:, 0]
            eta_dot = -R_alpha.T @ np.cross(sR, R_bar @ R_alpha[:, 0])
            expected = -k2r_eff * float(np.dot(E2, eta)) * np.cross(E3, eta)
            np.testing.assert_allclose(eta_dot, expected, atol=1e-12)

    def test_heading_saddle_is_repelling(self, paper_gains):
        # eta near -e1: the e2 component grows at +k2r_eff
        rep = analysis.linearized_poles(paper_gains)
        R_alpha, _, _ = analysis.heading_frame(M_I)
        eps = 1e-6
        R_bar = R_alpha @ exp_rotation(np.array([0.0, 0.0, math.pi - eps])) @ R_alpha.T
        _, sR = analysis.error_field_full(np.zeros(3), R_bar, paper_gains, M_I, 1)
        eta = R_alpha.T @ R_bar @ R_alpha[:, 0]
        eta_dot = -R_alpha.T @ np.cross(sR, R_bar @ R_alpha[:, 0])
        # d(eta_2)/dt = +k2r_eff * eta_2 near the reversed equilibrium
        ratio = float(eta_dot[1]) / float(eta[1])
        assert math.isclose(ratio, rep.yaw_pole_undesired, rel_tol=1e-4)


class TestMakeErrorState:
    def test_matches_invariant_errors(self, paper_gains, rng):
        tr = truth_at(TrajectorySpec(), 2.5)
        est = FullObserverState(
            tr.v + rng.normal(size=3), random_rotation(rng) @ tr.R
        )
        full = analysis.invariant_errors(tr, est, paper_gains, M_I)
        built = analysis.make_error_state(
            full.v_bar, paper_gains, R_bar=full.R_bar, m_I=M_I
        )
        np.testing.assert_allclose(built.gamma_bar, full.gamma_bar, atol=1e-15)
        np.testing.assert_allclose(built.delta, full.delta, atol=1e-15)
        np.testing.assert_allclose(built.eta, full.eta, atol=1e-15)
        assert built.attitude_error_angle == full.attitude_error_angle

    def test_requires_exactly_one_attitude_input(self, paper_gains):
        with pytest.raises(ValueError):
            analysis.make_error_state(np.zeros(3), paper_gains)
        with pytest.raises(ValueError):
            analysis.make_error_state(
                np.zeros(3), paper_gains, R_bar=np.eye(3), gamma_bar=E3
            )
