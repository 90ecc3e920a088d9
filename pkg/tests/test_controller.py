import numpy as np
import pytest

from coptraj.controller import (ControllerGains, ReferencePoint,
                                attitude_error, control, desired_attitude,
                                desired_force)
from coptraj.quadrotor import (allocation_forward, hover_state, pack_state,
                               quat_from_axis_angle, quat_to_rotation)
from coptraj.simulation import IntegratorOptions, simulate
from coptraj.trajectory import uniform_plan


def z_rotation(theta):
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]])


class TestAttitudeError:
    def test_identical_rotations(self, rng):
        q = quat_from_axis_angle(rng.normal(size=3), 0.9)
        np.testing.assert_allclose(attitude_error(quat_to_rotation(q), q),
                                   np.zeros(3), atol=1e-14)

    @pytest.mark.parametrize("theta", [0.1, 0.5, 1.2, -0.8])
    def test_z_rotation_gives_sine(self, theta):
        # vee formula evaluated for R_d = I, R = Rz(theta): e_q = (0,0,sin t)
        q = quat_from_axis_angle([0, 0, 1], theta)
        e = attitude_error(np.eye(3), q)
        np.testing.assert_allclose(e, [0, 0, np.sin(theta)], atol=1e-12)

    def test_antisymmetry(self, rng):
        qa = quat_from_axis_angle(rng.normal(size=3), 0.6)
        qb = quat_from_axis_angle(rng.normal(size=3), -0.4)
        e_ab = attitude_error(quat_to_rotation(qa), qb)
        e_ba = attitude_error(quat_to_rotation(qb), qa)
        np.testing.assert_allclose(e_ab, -e_ba, atol=1e-13)

    def test_rejects_non_rotation(self):
        with pytest.raises(ValueError):
            attitude_error(np.diag([1.0, 1.0, 2.0]), [1, 0, 0, 0])
        with pytest.raises(ValueError):
            attitude_error(np.diag([1.0, 1.0, -1.0]), [1, 0, 0, 0])


class TestDesiredAttitude:
    def test_level_hover(self, constants):
        R = desired_attitude([0, 0, constants.mass * constants.gravity], 0.0)
        np.testing.assert_allclose(R, np.eye(3), atol=1e-14)

    def test_yaw_quarter_turn(self, constants):
        R = desired_attitude([0, 0, constants.mass * constants.gravity],
                             np.pi / 2)
        np.testing.assert_allclose(R, z_rotation(np.pi / 2), atol=1e-14)

    def test_orthonormality(self, rng):
        for _ in range(50):
            f = rng.normal(size=3) + [0, 0, 8.0]
            R = desired_attitude(f, rng.uniform(-np.pi, np.pi))
            np.testing.assert_allclose(R.T @ R, np.eye(3), atol=1e-10)
            assert np.linalg.det(R) == pytest.approx(1.0, abs=1e-10)
            np.testing.assert_allclose(R[:, 2], f / np.linalg.norm(f),
                                       atol=1e-12)

    def test_degenerate_thrust_raises(self):
        with pytest.raises(ValueError):
            desired_attitude([0.0, 0.0, 0.0], 0.0)


class TestControlLaw:
    def test_hover_feedforward(self, params, constants, gains):
        ref = ReferencePoint.hold(np.zeros(3))
        u, xi_dot, sat = control(np.zeros(3), hover_state(), ref, gains,
                                 params, constants)
        assert not sat
        np.testing.assert_allclose(u, np.full(4, u[0]), rtol=1e-12)
        f, tau = allocation_forward(u, params, constants)
        assert f == pytest.approx(constants.mass * constants.gravity, rel=1e-12)
        np.testing.assert_allclose(tau, np.zeros(3), atol=1e-12)
        np.testing.assert_array_equal(xi_dot, np.zeros(3))

    def test_position_error_term(self, constants, gains):
        # desired force picks up -k_r * delta along x, term by term
        delta = 0.2
        ref = ReferencePoint.hold(np.zeros(3))
        x = hover_state([delta, 0.0, 0.0])
        f_vec = desired_force(np.zeros(3), x, ref, gains, constants)
        expected = np.array([-gains.k_r[0] * delta, 0.0,
                             constants.mass * constants.gravity])
        np.testing.assert_allclose(f_vec, expected, rtol=1e-14)

    def test_single_axis_rate_damping(self, params, constants, gains):
        c_rate = 0.3
        ref = ReferencePoint.hold(np.zeros(3))
        x = pack_state(np.zeros(3), np.zeros(3), [1, 0, 0, 0], [0, 0, c_rate])
        u, _, _ = control(np.zeros(3), x, ref, gains, params, constants)
        _, tau = allocation_forward(u, params, constants)
        np.testing.assert_allclose(tau, [0, 0, -gains.k_w[2] * c_rate],
                                   atol=1e-12)

    def test_integrator_clamp(self, params, constants, gains):
        ref = ReferencePoint.hold(np.zeros(3))
        huge_xi = np.full(3, 100.0)
        u_hi, _, _ = control(huge_xi, hover_state(), ref, gains, params,
                             constants, clamp=False)
        u_lim, _, _ = control(np.full(3, gains.xi_limit), hover_state(), ref,
                              gains, params, constants, clamp=False)
        np.testing.assert_allclose(u_hi, u_lim, rtol=1e-12)

    def test_determinism(self, params, constants, gains, rng):
        x = hover_state(rng.normal(size=3))
        xi = rng.normal(size=3)
        ref = ReferencePoint.hold(rng.normal(size=3))
        u1, d1, _ = control(xi, x, ref, gains, params, constants)
        u2, d2, _ = control(xi, x, ref, gains, params, constants)
        np.testing.assert_array_equal(u1, u2)
        np.testing.assert_array_equal(d1, d2)

    def test_saturation_flag(self, params, gains, constants):
        from coptraj.quadrotor import QuadrotorConstants
        tight = QuadrotorConstants(u_max=hover_u_bound(params, constants))
        ref = ReferencePoint.hold([0, 0, 5.0])   # demands a climb
        u, _, sat = control(np.zeros(3), hover_state(), ref, gains, params,
                            tight)
        assert sat
        assert np.all(u <= tight.u_max + 1e-12)


def hover_u_bound(params, constants):
    return constants.mass * constants.gravity / (4 * params.k_f) * 1.001


class TestRegulation:
    def test_step_offset_decays(self, params, constants, gains):
        # tuning smoke test: 0.1 m offset, envelope monotone, < 1e-3 in 5 s
        plan = uniform_plan([0, 0, 0, 0], [0, 0, 0, 0], 5.0, 1)
        traj = plan.build()
        x0 = hover_state([0.1, 0.0, 0.0])
        tr = simulate(x0, np.zeros(3), traj, params, params, constants, gains,
                      5.0, IntegratorOptions("rk4", fixed_step=1e-3))
        err = np.linalg.norm(tr.positions(), axis=1)
        assert err[0] == pytest.approx(0.1, rel=1e-9)
        # envelope never exceeds the initial offset
        assert np.max(err) <= 0.1 * (1 + 1e-6)
        # running envelope (max over the remaining horizon) is non-increasing
        envelope = np.maximum.accumulate(err[::-1])[::-1]
        assert np.all(np.diff(envelope) <= 1e-12)
        assert envelope[-1] < 1e-3
        assert tr.saturation_count == 0
