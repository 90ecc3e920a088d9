"""Piecewise Bezier reference trajectories parameterized by timed way-points.

A trajectory with ``n_jc`` joining conditions per way-point (value, velocity,
acceleration, ...) uses pieces of degree ``d = 2*n_jc - 1``; the control
points of each piece solve the linear system of Bernstein boundary-derivative
conditions, which makes the curve interpolate every way-point condition
exactly.  Neighboring pieces share their way-point, so the curve is
C^(n_jc - 1) continuous at interior joints; derivatives beyond the joining
conditions are piece-local.
"""

from dataclasses import dataclass, field, replace
from math import comb, factorial

import numpy as np

from . import _kernels as _k


@dataclass(frozen=True)
class Waypoint:
    """Boundary conditions at one instant: columns are derivative orders."""
    t: float
    conditions: np.ndarray  # (n_dim, n_jc)

    def __post_init__(self):
        object.__setattr__(self, "conditions",
                           np.atleast_2d(np.asarray(self.conditions, dtype=float)))


def _derivative_condition_matrix(n_jc):
    """Bernstein derivative coefficients at both ends of a unit interval."""
    d = 2 * n_jc - 1
    n_c = d + 1
    M = np.zeros((2 * n_jc, n_c))
    for k in range(n_jc):
        lead = factorial(d) // factorial(d - k)
        for j in range(k + 1):
            M[k, j] = lead * (-1) ** (k - j) * comb(k, j)
            M[n_jc + k, d - j] = lead * (-1) ** j * comb(k, j)
    return M


class PiecewiseBezier:
    """Immutable evaluated form: piece knots plus control points."""

    def __init__(self, times, ctrl, n_jc):
        self.times = np.ascontiguousarray(times, dtype=float)
        self.ctrl = np.ascontiguousarray(ctrl, dtype=float)
        self.n_jc = int(n_jc)
        n_c = self.ctrl.shape[2]
        if n_c != 2 * self.n_jc:
            raise ValueError("control point count does not match n_jc")

    @property
    def degree(self):
        return self.ctrl.shape[2] - 1

    @property
    def n_dim(self):
        return self.ctrl.shape[1]

    @property
    def n_pieces(self):
        return self.ctrl.shape[0]

    @property
    def duration(self):
        return float(self.times[-1] - self.times[0])

    def evaluate(self, t, order=0):
        """Value or time derivative of the curve at t (n_dim vector)."""
        t = float(t)
        if order < 0:
            raise ValueError("order must be non-negative")
        lo, hi = self.times[0], self.times[-1]
        tol = 1e-9 * max(1.0, hi - lo)
        if t < lo - tol or t > hi + tol:
            raise ValueError(f"t={t} outside trajectory span [{lo}, {hi}]")
        t = min(max(t, lo), hi)
        return _k.traj_eval(self.times, self.ctrl, t, order)

    def evaluate_many(self, ts, order=0):
        out = np.empty((len(ts), self.n_dim))
        for i, t in enumerate(ts):
            out[i] = self.evaluate(t, order)
        return out

    def sample_grid(self, rate, orders=(0,)):
        """Uniform samples; returns (ts, {order: (M, n_dim) array})."""
        n = int(round(self.duration * rate))
        ts = self.times[0] + np.arange(n + 1) / rate
        ts[-1] = self.times[-1]
        return ts, {k: self.evaluate_many(ts, k) for k in orders}


def solve_control_points(waypoints, n_jc=None):
    """Build the piecewise curve interpolating a way-point sequence.

    Each consecutive pair yields one piece whose control points solve the
    2*n_jc boundary conditions; derivative conditions are scaled by the piece
    duration so columns of each way-point are true time derivatives.
    """
    if len(waypoints) < 2:
        raise ValueError("need at least two way-points")
    if n_jc is None:
        n_jc = waypoints[0].conditions.shape[1]
    times = np.array([float(w.t) for w in waypoints])
    if np.any(np.diff(times) <= 0.0):
        raise ValueError("way-point times must be strictly increasing")
    n_dim = waypoints[0].conditions.shape[0]
    for w in waypoints:
        if w.conditions.shape != (n_dim, n_jc):
            raise ValueError("inconsistent way-point condition shapes")
    M = _derivative_condition_matrix(n_jc)
    n_c = 2 * n_jc
    n = len(waypoints) - 1
    ctrl = np.empty((n, n_dim, n_c))
    for i in range(n):
        dur = times[i + 1] - times[i]
        scale = dur ** np.arange(n_jc)
        b = np.empty((2 * n_jc, n_dim))
        b[:n_jc] = (waypoints[i].conditions * scale).T
        b[n_jc:] = (waypoints[i + 1].conditions * scale).T
        ctrl[i] = np.linalg.solve(M, b).T
    return PiecewiseBezier(times, ctrl, n_jc)


@dataclass(frozen=True)
class WaypointPlan:
    """Way-point tensor with a designated set of free decision variables.

    ``boundary`` has shape (n_waypoints, n_dim, n_jc).  The first and last
    way-points and the knot times are fixed; the interior values at the
    orders listed in ``free_orders`` form the flat parameter vector ``a``
    (way-point major, then order, then dimension).
    """
    times: np.ndarray
    boundary: np.ndarray
    free_orders: tuple = (0,)

    def __post_init__(self):
        object.__setattr__(self, "times", np.asarray(self.times, dtype=float))
        object.__setattr__(self, "boundary", np.asarray(self.boundary, dtype=float))
        object.__setattr__(self, "free_orders", tuple(self.free_orders))
        if self.boundary.shape[0] != len(self.times):
            raise ValueError("way-point count mismatch")
        for k in self.free_orders:
            if not 0 <= k < self.n_jc:
                raise ValueError("free order outside joining conditions")

    @property
    def n_dim(self):
        return self.boundary.shape[1]

    @property
    def n_jc(self):
        return self.boundary.shape[2]

    @property
    def n_interior(self):
        return self.boundary.shape[0] - 2

    @property
    def n_free(self):
        return self.n_interior * len(self.free_orders) * self.n_dim

    def pack(self):
        """Flatten the free interior values into the decision vector."""
        if self.n_free == 0:
            return np.empty(0)
        chunks = [self.boundary[i, :, k]
                  for i in range(1, self.boundary.shape[0] - 1)
                  for k in self.free_orders]
        return np.concatenate(chunks)

    def with_params(self, a):
        """Inverse of pack(); fixed head/tail entries are preserved exactly."""
        a = np.asarray(a, dtype=float)
        if a.shape != (self.n_free,):
            raise ValueError(f"expected {self.n_free} free values, got {a.shape}")
        boundary = self.boundary.copy()
        pos = 0
        for i in range(1, boundary.shape[0] - 1):
            for k in self.free_orders:
                boundary[i, :, k] = a[pos:pos + self.n_dim]
                pos += self.n_dim
        return replace(self, boundary=boundary)

    def with_tail_offset(self, delta):
        """Shift the final way-point position (first three dimensions)."""
        boundary = self.boundary.copy()
        boundary[-1, 0:3, 0] += np.asarray(delta, dtype=float)
        return replace(self, boundary=boundary)

    def waypoints(self):
        return [Waypoint(t, self.boundary[i]) for i, t in enumerate(self.times)]

    def build(self):
        return solve_control_points(self.waypoints(), self.n_jc)


def uniform_plan(p0, p_target, duration, n_pieces, n_jc=3, free_orders=(0,)):
    """Plan with evenly spaced knots from a start to a target flat output.

    p0 and p_target are (x, y, z, yaw); interior way-points start on the
    straight line between them, higher-order conditions start at zero.
    """
    p0 = np.asarray(p0, dtype=float)
    p_target = np.asarray(p_target, dtype=float)
    n_dim = p0.shape[0]
    times = np.linspace(0.0, duration, n_pieces + 1)
    boundary = np.zeros((n_pieces + 1, n_dim, n_jc))
    for i in range(n_pieces + 1):
        lam = i / n_pieces
        boundary[i, :, 0] = (1.0 - lam) * p0 + lam * p_target
    return WaypointPlan(times, boundary, free_orders)
