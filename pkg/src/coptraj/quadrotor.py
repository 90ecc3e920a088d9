"""Rigid-body quadrotor model: quaternion algebra, rotor allocation, dynamics.

State vector layout (13 entries):
    r (3)  position, world frame [m]
    v (3)  velocity, world frame [m/s]
    q (4)  unit orientation quaternion, scalar first (w, x, y, z)
    w (3)  angular velocity, body frame [rad/s]

Quaternions are Hamiltonian with the body-to-world sandwich
``R(q) v = q ⊗ (0, v) ⊗ q*`` and the kinematics ``q̇ = ½ q ⊗ (0, ω)``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as _k

QUAT_TOL = 1e-9

POS = slice(0, 3)
VEL = slice(3, 6)
QUAT = slice(6, 10)
OMEGA = slice(10, 13)


@dataclass(frozen=True)
class RotorParams:
    """Uncertain aerodynamic coefficients: thrust force and drag moment."""
    k_f: float
    k_m: float

    def __post_init__(self):
        if self.k_f <= 0.0 or self.k_m <= 0.0:
            raise ValueError("rotor coefficients must be strictly positive")

    def as_array(self):
        return np.array([self.k_f, self.k_m])

    @staticmethod
    def from_array(a):
        return RotorParams(float(a[0]), float(a[1]))


def _default_inertia():
    return np.diag([7e-3, 7e-3, 12e-3])


@dataclass(frozen=True)
class QuadrotorConstants:
    """Fixed physical quantities of the vehicle.

    The defaults are plausible values for a Hummingbird-class machine; they
    are deliberately configurable because every check in the test suite is
    a property of the model, not of one particular airframe.
    """
    mass: float = 0.68
    inertia: np.ndarray = field(default_factory=_default_inertia)
    arm_length: float = 0.17
    gravity: float = 9.81
    u_min: float = 0.0
    u_max: float = 2.0e4

    def __post_init__(self):
        J = np.asarray(self.inertia, dtype=float)
        object.__setattr__(self, "inertia", J)
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        if self.arm_length <= 0.0:
            raise ValueError("arm length must be positive")
        if J.shape != (3, 3) or not np.allclose(J, J.T, atol=1e-12):
            raise ValueError("inertia must be a symmetric 3x3 matrix")
        if np.any(np.linalg.eigvalsh(J) <= 0.0):
            raise ValueError("inertia must be positive definite")
        if self.u_min < 0.0 or self.u_max <= self.u_min:
            raise ValueError("need 0 <= u_min < u_max")

    @property
    def inertia_inv(self):
        return np.linalg.inv(self.inertia)


def pack_state(r, v, q, w):
    x = np.empty(13)
    x[POS] = r
    x[VEL] = v
    x[QUAT] = q
    x[OMEGA] = w
    return x


def hover_state(r=(0.0, 0.0, 0.0), yaw=0.0):
    """State at rest at position r with the given heading."""
    q = np.array([np.cos(yaw / 2.0), 0.0, 0.0, np.sin(yaw / 2.0)])
    return pack_state(np.asarray(r, dtype=float), np.zeros(3), q, np.zeros(3))


def quat_multiply(a, b):
    return _k.quat_mul(np.asarray(a, dtype=float), np.asarray(b, dtype=float))


def quat_conjugate(q):
    out = np.array(q, dtype=float)
    out[1:] = -out[1:]
    return out


def quat_to_rotation(q):
    """Body-to-world rotation matrix; q must be unit length."""
    q = _check_unit(q)
    return _k.quat_to_rot(q)


def quat_rotate(q, v):
    """Apply R(q) to a 3-vector; preserves the Euclidean norm."""
    q = _check_unit(q)
    return _k.quat_rotate(q, np.asarray(v, dtype=float))


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = 0.5 * angle
    return np.concatenate(([np.cos(half)], np.sin(half) * axis))


def yaw_from_quat(q):
    """Heading angle of the yaw-first (312) Tait-Bryan factorization."""
    R = quat_to_rotation(q)
    return np.arctan2(R[1, 0], R[0, 0])


def _check_unit(q):
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if abs(n - 1.0) > 1e-6:
        raise ValueError(f"quaternion norm {n:.2e} is not unit")
    return q / n


def allocation_matrix(p: RotorParams, c: QuadrotorConstants):
    """Map from squared rotor speeds to [thrust, tau_x, tau_y, tau_z]."""
    kf, km, ell = p.k_f, p.k_m, c.arm_length
    return kf * np.array([
        [1.0, 1.0, 1.0, 1.0],
        [0.0, ell, 0.0, -ell],
        [-ell, 0.0, ell, 0.0],
        [km, -km, km, -km],
    ])


def allocation_forward(u, p: RotorParams, c: QuadrotorConstants):
    """Thrust [N] and body torques [N m] produced by squared rotor speeds."""
    u = np.asarray(u, dtype=float)
    w = _k.wrench_from_u(u, p.k_f, p.k_m, c.arm_length)
    return w[0], w[1:4]


def allocation_inverse(f, tau, p: RotorParams, c: QuadrotorConstants):
    """Squared rotor speeds realizing a wrench (exact, S is invertible)."""
    S = allocation_matrix(p, c)
    wrench = np.concatenate(([f], np.asarray(tau, dtype=float)))
    return np.linalg.solve(S, wrench)


def dynamics(x, u, p: RotorParams, c: QuadrotorConstants):
    """State derivative of the free rigid body under rotor input u."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    return _k.dynamics13(x, u, p.k_f, p.k_m, c.mass, c.arm_length, c.gravity,
                         c.inertia, c.inertia_inv)


def hover_input(p: RotorParams, c: QuadrotorConstants):
    """Symmetric squared rotor speeds balancing gravity."""
    u = c.mass * c.gravity / (4.0 * p.k_f)
    return np.full(4, u)
