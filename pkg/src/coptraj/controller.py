"""Geometric tracking controller with a position integrator.

The law follows the usual SO(3) construction: a desired force vector from
PID-style position feedback plus gravity/acceleration feedforward, a scalar
thrust obtained by projecting that vector on the current body z axis, a
desired attitude built from the force direction and the reference heading,
and torques from the rotation-matrix attitude error.  Rotor commands come
from the inverse allocation map evaluated at the *nominal* parameters.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k
from .quadrotor import QuadrotorConstants, RotorParams, allocation_matrix, _check_unit

THRUST_EPS = 1e-6


def _vec3(v):
    a = np.asarray(v, dtype=float)
    if a.ndim == 0:
        a = np.full(3, float(a))
    return a


@dataclass(frozen=True)
class ControllerGains:
    """Per-axis diagonal gains; scalars broadcast to all three axes.

    The defaults are validated by the regulation smoke test (0.1 m offset
    settling below 1 mm within 5 s on the default airframe), which pins the
    attitude loop well above the position loop and keeps the integrator
    residual small.
    """
    k_r: np.ndarray = 6.0
    k_v: np.ndarray = 4.0
    k_i: np.ndarray = 0.05
    k_q: np.ndarray = 3.0
    k_w: np.ndarray = 0.35
    xi_limit: float = 5.0

    def __post_init__(self):
        for name in ("k_r", "k_v", "k_i", "k_q", "k_w"):
            v = _vec3(getattr(self, name))
            if np.any(v <= 0.0):
                raise ValueError(f"{name} must be positive")
            object.__setattr__(self, name, v)
        if self.xi_limit <= 0.0:
            raise ValueError("xi_limit must be positive")

    def as_matrix(self):
        """Rows k_r, k_v, k_i, k_q, k_w for the compiled kernels."""
        return np.vstack([self.k_r, self.k_v, self.k_i, self.k_q, self.k_w])


@dataclass
class ReferencePoint:
    """Flat output (x, y, z, yaw) with first and second time derivatives."""
    value: np.ndarray
    velocity: np.ndarray
    acceleration: np.ndarray

    def as_matrix(self):
        return np.vstack([self.value, self.velocity, self.acceleration])

    @staticmethod
    def hold(position, yaw=0.0):
        v = np.concatenate([np.asarray(position, dtype=float), [yaw]])
        return ReferencePoint(v, np.zeros(4), np.zeros(4))


def attitude_error(R_d, q):
    """Rotation error e_q = 0.5 * vee(R_d^T R(q) - R(q)^T R_d).

    The angular-velocity error of the law is the body rate itself and needs
    no computation here.
    """
    R_d = np.asarray(R_d, dtype=float)
    if R_d.shape != (3, 3) or not np.allclose(R_d @ R_d.T, np.eye(3), atol=1e-8) \
            or np.linalg.det(R_d) < 0.0:
        raise ValueError("R_d is not a rotation matrix")
    R = _k.quat_to_rot(_check_unit(q))
    M = R_d.T @ R - R.T @ R_d
    return 0.5 * np.array([M[2, 1], M[0, 2], M[1, 0]])


def desired_attitude(f_vec, yaw_d):
    """Rotation whose z axis follows the desired force at heading yaw_d."""
    f_vec = np.asarray(f_vec, dtype=float)
    n = np.linalg.norm(f_vec)
    if n <= THRUST_EPS:
        raise ValueError("desired force vector is degenerate")
    b3 = f_vec / n
    b1h = np.array([np.cos(yaw_d), np.sin(yaw_d), 0.0])
    b2 = np.cross(b3, b1h)
    b2n = np.linalg.norm(b2)
    if b2n < 1e-9:
        raise ValueError("desired thrust is parallel to the heading")
    b2 = b2 / b2n
    b1 = np.cross(b2, b3)
    return np.column_stack([b1, b2, b3])


def desired_force(xi, x, ref: ReferencePoint, gains: ControllerGains,
                  c: QuadrotorConstants):
    """World-frame desired force vector before the body-z projection."""
    x = np.asarray(x, dtype=float)
    xi_eff = np.clip(np.asarray(xi, dtype=float), -gains.xi_limit,
                     gains.xi_limit)
    e_r = x[0:3] - ref.value[0:3]
    e_v = x[3:6] - ref.velocity[0:3]
    ff = np.array([0.0, 0.0, c.gravity]) + ref.acceleration[0:3]
    return (-gains.k_r * e_r - gains.k_v * e_v - gains.k_i * xi_eff
            + c.mass * ff)


def control(xi, x, ref: ReferencePoint, gains: ControllerGains,
            p_c: RotorParams, c: QuadrotorConstants, clamp=True):
    """Rotor command and integrator derivative for one state/reference pair.

    Returns (u, xi_dot, saturated).  With clamp=True the command is boxed to
    [u_min, u_max]; the saturation flag reports whether boxing was active.
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    Sinv = np.linalg.inv(allocation_matrix(p_c, c))
    par = _pack_par(p_c, p_c, c, gains)
    u_unc = _k.control_law(x, xi, ref.as_matrix(), gains.as_matrix(), par, Sinv)
    if np.any(~np.isfinite(u_unc)):
        raise ValueError("desired force vector is degenerate")
    xi_dot = x[0:3] - ref.value[0:3]
    if not clamp:
        return u_unc, xi_dot, False
    u, sat = _k.clamp_u(u_unc, c.u_min, c.u_max)
    return u, xi_dot, bool(sat)


def _pack_par(p_real: RotorParams, p_c: RotorParams, c: QuadrotorConstants,
              gains: ControllerGains):
    """Scalar parameter vector shared by all compiled kernels."""
    return np.array([
        c.mass, c.gravity, c.arm_length,
        p_real.k_f, p_real.k_m, p_c.k_f, p_c.k_m,
        c.u_min, c.u_max, gains.xi_limit, THRUST_EPS,
    ])
