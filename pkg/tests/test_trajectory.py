import numpy as np
import pytest

from coptraj import _kernels as _k
from coptraj.trajectory import (PiecewiseBezier, Waypoint, WaypointPlan,
                                solve_control_points, uniform_plan)


def random_waypoints(rng, n_wp=4, n_dim=4, n_jc=3, duration=9.0):
    times = np.linspace(0.0, duration, n_wp)
    return [Waypoint(t, rng.normal(scale=2.0, size=(n_dim, n_jc)))
            for t in times]


class TestSolveControlPoints:
    def test_single_joining_condition_is_line(self):
        wps = [Waypoint(0.0, [[0.0], [1.0]]), Waypoint(2.0, [[4.0], [3.0]])]
        traj = solve_control_points(wps)
        assert traj.degree == 1
        for lam in np.linspace(0, 1, 7):
            np.testing.assert_allclose(traj.evaluate(2.0 * lam),
                                       [4.0 * lam, 1 + 2 * lam], atol=1e-12)

    def test_resting_waypoints_give_constant_curve(self):
        cond = np.array([[2.0, 0.0], [-1.0, 0.0]])
        wps = [Waypoint(0.0, cond), Waypoint(3.0, cond)]
        traj = solve_control_points(wps)
        assert traj.degree == 3
        np.testing.assert_allclose(traj.ctrl[0],
                                   np.repeat(cond[:, :1], 4, axis=1),
                                   atol=1e-12)

    def test_boundary_interpolation(self, rng):
        # every way-point condition reproduced at every order
        wps = random_waypoints(rng)
        traj = solve_control_points(wps)
        for wp in wps:
            for k in range(3):
                np.testing.assert_allclose(traj.evaluate(wp.t, k),
                                           wp.conditions[:, k], atol=1e-9)

    def test_degree_relation(self, rng):
        for n_jc in (1, 2, 3, 4):
            wps = random_waypoints(rng, n_jc=n_jc)
            traj = solve_control_points(wps)
            assert traj.degree == 2 * n_jc - 1

    def test_duplicate_times_rejected(self, rng):
        wps = random_waypoints(rng)
        wps[1] = Waypoint(wps[0].t, wps[1].conditions)
        with pytest.raises(ValueError):
            solve_control_points(wps)

    def test_needs_two_waypoints(self, rng):
        with pytest.raises(ValueError):
            solve_control_points(random_waypoints(rng)[:1])

    def test_joint_continuity(self, rng):
        # left/right derivatives agree through every shared joining order
        # (higher orders are piece-local degrees of freedom by construction)
        wps = random_waypoints(rng, n_wp=5)
        traj = solve_control_points(wps)
        for i in range(traj.n_pieces - 1):
            dur_l = traj.times[i + 1] - traj.times[i]
            dur_r = traj.times[i + 2] - traj.times[i + 1]
            for k in range(traj.n_jc):
                left = _k.bezier_piece_eval(traj.ctrl[i], 1.0, k, dur_l)
                right = _k.bezier_piece_eval(traj.ctrl[i + 1], 0.0, k, dur_r)
                np.testing.assert_allclose(left, right, atol=1e-9)


class TestEvaluate:
    def test_linear_piece_midpoint(self):
        wps = [Waypoint(0.0, [[1.0]]), Waypoint(4.0, [[5.0]])]
        traj = solve_control_points(wps)
        assert traj.evaluate(2.0)[0] == pytest.approx(3.0, abs=1e-14)

    def test_order_beyond_degree_is_zero(self, rng):
        traj = solve_control_points(random_waypoints(rng))
        np.testing.assert_array_equal(traj.evaluate(1.0, traj.degree + 1),
                                      np.zeros(traj.n_dim))
        np.testing.assert_array_equal(traj.evaluate(1.0, traj.degree + 3),
                                      np.zeros(traj.n_dim))

    def test_derivative_matches_finite_difference(self, rng):
        traj = solve_control_points(random_waypoints(rng))
        h = 1e-6
        for t in rng.uniform(0.5, 8.5, 10):
            fd = (traj.evaluate(t + h) - traj.evaluate(t - h)) / (2 * h)
            an = traj.evaluate(t, 1)
            np.testing.assert_allclose(an, fd, rtol=1e-6, atol=1e-6)

    def test_out_of_range_rejected(self, rng):
        traj = solve_control_points(random_waypoints(rng))
        with pytest.raises(ValueError):
            traj.evaluate(-0.5)
        with pytest.raises(ValueError):
            traj.evaluate(9.5)

    def test_convex_hull_bounding_box(self, rng):
        traj = solve_control_points(random_waypoints(rng))
        for i in range(traj.n_pieces):
            lo = traj.ctrl[i].min(axis=1) - 1e-12
            hi = traj.ctrl[i].max(axis=1) + 1e-12
            for s in np.linspace(0, 1, 17):
                t = traj.times[i] + s * (traj.times[i + 1] - traj.times[i])
                v = traj.evaluate(t)
                assert np.all(v >= lo) and np.all(v <= hi)


class TestWaypointPlan:
    def test_pack_unpack_round_trip(self, rng):
        plan = uniform_plan([0, 0, 0, 0], [3, 2, 1, 0.5], 12.0, 4)
        a = rng.normal(size=plan.n_free)
        plan2 = plan.with_params(a)
        np.testing.assert_array_equal(plan2.pack(), a)
        # fixed head and tail entries preserved exactly
        np.testing.assert_array_equal(plan2.boundary[0], plan.boundary[0])
        np.testing.assert_array_equal(plan2.boundary[-1], plan.boundary[-1])
        np.testing.assert_array_equal(plan2.times, plan.times)

    def test_no_interior_waypoints_gives_empty_vector(self):
        plan = uniform_plan([0, 0, 0, 0], [1, 1, 1, 0], 5.0, 1)
        assert plan.n_free == 0
        assert plan.pack().shape == (0,)
        plan.with_params(np.empty(0))   # round-trips

    def test_dimension_mismatch_rejected(self):
        plan = uniform_plan([0, 0, 0, 0], [1, 1, 1, 0], 5.0, 3)
        with pytest.raises(ValueError):
            plan.with_params(np.zeros(plan.n_free + 1))

    def test_tail_offset(self):
        plan = uniform_plan([0, 0, 0, 0], [1, 2, 3, 0.3], 5.0, 2)
        shifted = plan.with_tail_offset([0.1, -0.2, 0.05])
        np.testing.assert_allclose(shifted.boundary[-1, 0:3, 0],
                                   [1.1, 1.8, 3.05])
        assert shifted.boundary[-1, 3, 0] == plan.boundary[-1, 3, 0]
        # offset survives pack/unpack of the free values
        a = shifted.pack()
        np.testing.assert_array_equal(shifted.with_params(a).boundary[-1],
                                      shifted.boundary[-1])

    def test_free_orders_validated(self):
        with pytest.raises(ValueError):
            WaypointPlan(np.array([0.0, 1.0]), np.zeros((2, 4, 3)),
                         free_orders=(5,))

    def test_higher_orders_can_be_freed(self, rng):
        plan = uniform_plan([0, 0, 0, 0], [1, 1, 1, 0], 6.0, 3,
                            free_orders=(0, 1))
        assert plan.n_free == 2 * 2 * 4
        a = rng.normal(size=plan.n_free)
        np.testing.assert_array_equal(plan.with_params(a).pack(), a)

    def test_build_respects_waypoints(self):
        plan = uniform_plan([0, 0, 0, 0], [2, 2, 1, 0], 8.0, 2)
        traj = plan.build()
        np.testing.assert_allclose(traj.evaluate(0.0), [0, 0, 0, 0],
                                   atol=1e-12)
        np.testing.assert_allclose(traj.evaluate(8.0), [2, 2, 1, 0],
                                   atol=1e-12)
        np.testing.assert_allclose(traj.evaluate(4.0), [1, 1, 0.5, 0],
                                   atol=1e-9)
