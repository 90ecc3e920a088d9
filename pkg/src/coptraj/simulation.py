"""Closed-loop simulation of the plant/controller system.

The plant integrates with the *real* parameter values while the controller
always uses the nominal ones; the mismatch is exactly what the sensitivity
and robustness machinery studies.  Two integrators are available: a fixed
step classical RK4 (deterministic, compiled) and adaptive Dormand-Prince
5(4) via scipy.  The controller runs in continuous time inside the ODE
right-hand side.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.integrate import solve_ivp

from . import _kernels as _k
from .controller import ControllerGains, _pack_par
from .quadrotor import QuadrotorConstants, RotorParams
from .trajectory import PiecewiseBezier


class SimulationDiverged(RuntimeError):
    """Carries the last time at which the state was still valid."""

    def __init__(self, t_last):
        super().__init__(f"simulation diverged after t={t_last:.3f} s")
        self.t_last = t_last


@dataclass(frozen=True)
class IntegratorOptions:
    method: str = "rk4"          # "rk4" fixed step or "rk45" adaptive
    fixed_step: float = 1e-3
    rel_tol: float = 1e-8
    abs_tol: float = 1e-8
    output_rate: float = 100.0

    def __post_init__(self):
        if self.method not in ("rk4", "rk45"):
            raise ValueError("method must be 'rk4' or 'rk45'")
        if min(self.fixed_step, self.rel_tol, self.abs_tol, self.output_rate) <= 0:
            raise ValueError("integrator options must be positive")


@dataclass
class SimTrace:
    """Uniformly sampled closed-loop run."""
    times: np.ndarray
    states: np.ndarray             # (M, 13)
    controller_states: np.ndarray  # (M, 3)
    inputs: np.ndarray             # (M, 4), clamped commands
    saturated: np.ndarray          # (M,) flags
    diverged: bool
    t_last: float
    pi: Optional[np.ndarray] = None       # (M, 13, 2)
    pi_xi: Optional[np.ndarray] = None    # (M, 3, 2)
    theta: Optional[np.ndarray] = None    # (M, 4, 2)

    @property
    def saturation_count(self):
        return int(np.sum(self.saturated))

    def positions(self):
        return self.states[:, 0:3]


def _check_span(traj: PiecewiseBezier, T):
    if T <= 0:
        raise ValueError("T must be positive")
    tol = 1e-9 * max(1.0, T)
    if traj.times[0] > tol or traj.times[-1] < T - tol:
        raise ValueError("trajectory does not span [0, T]")


def simulate(x0, xi0, traj: PiecewiseBezier, p_real: RotorParams,
             p_c: RotorParams, c: QuadrotorConstants, gains: ControllerGains,
             T, opts: IntegratorOptions = IntegratorOptions(), strict=False):
    """Integrate the closed loop over [0, T] and sample it uniformly.

    Divergence (non-finite or escaping state) is returned as a flagged trace
    so parameter-perturbation campaigns can tolerate bad draws; pass
    strict=True to raise SimulationDiverged instead.
    """
    _check_span(traj, T)
    x0 = np.asarray(x0, dtype=float)
    xi0 = np.asarray(xi0, dtype=float)
    z0 = np.concatenate([x0, xi0])
    par = _pack_par(p_real, p_c, c, gains)
    Sinv = np.linalg.inv(_alloc(p_c, c))
    G = gains.as_matrix()
    J, Jinv = c.inertia, c.inertia_inv
    out_dt = 1.0 / opts.output_rate

    if opts.method == "rk4":
        ts, Z, U, sat, diverged, t_last = _k.simulate_fixed(
            z0, T, opts.fixed_step, out_dt, traj.times, traj.ctrl,
            G, par, Sinv, J, Jinv)
    else:
        ts, Z, U, sat, diverged, t_last = _simulate_adaptive(
            z0, T, out_dt, traj, G, par, Sinv, J, Jinv, opts)

    trace = SimTrace(ts, Z[:, 0:13], Z[:, 13:16], U, sat.astype(bool),
                     bool(diverged), float(t_last))
    if strict and trace.diverged:
        raise SimulationDiverged(trace.t_last)
    return trace


def _alloc(p, c):
    from .quadrotor import allocation_matrix
    return allocation_matrix(p, c)


def _simulate_adaptive(z0, T, out_dt, traj, G, par, Sinv, J, Jinv, opts):
    times, ctrl = traj.times, traj.ctrl

    def rhs(t, z):
        dz, _ = _k.closed_loop_rhs(t, z, times, ctrl, G, par, Sinv, J, Jinv)
        return dz

    n_out = int(np.rint(T / out_dt))
    ts = np.arange(n_out + 1) * out_dt
    res = solve_ivp(rhs, (0.0, T), z0, method="RK45", t_eval=ts,
                    rtol=opts.rel_tol, atol=opts.abs_tol)
    Z = np.full((n_out + 1, _k.N_Z), np.nan)
    got = res.y.T
    Z[:got.shape[0]] = got
    # renormalize the stored quaternion samples
    for k in range(got.shape[0]):
        n = np.linalg.norm(Z[k, 6:10])
        if n > 0 and np.isfinite(n):
            Z[k, 6:10] /= n
    diverged = not res.success
    k_last = got.shape[0] - 1
    for k in range(got.shape[0]):
        if not _k._state_ok(np.ascontiguousarray(Z[k])):
            diverged = True
            k_last = max(k - 1, 0)
            break
    if diverged:
        for k in range(k_last + 1, n_out + 1):
            Z[k] = Z[k_last]
    U = np.empty((n_out + 1, 4))
    sat = np.zeros(n_out + 1, dtype=np.int64)
    for k in range(n_out + 1):
        ref = _k.ref_state(times, ctrl, ts[k])
        u_unc = _k.control_law(Z[k, 0:13], Z[k, 13:16], ref, G, par, Sinv)
        U[k], sat[k] = _k.clamp_u(u_unc, par[_k.P_UMIN], par[_k.P_UMAX])
    return ts, Z, U, sat, diverged, ts[k_last] if diverged else T


def tracking_error_norm(trace: SimTrace, traj: PiecewiseBezier):
    """Time-averaged integral of the Euclidean position tracking error."""
    if len(trace.times) < 2:
        raise ValueError("trace is empty")
    ref = traj.evaluate_many(trace.times, 0)[:, 0:3]
    err = np.linalg.norm(trace.positions() - ref, axis=1)
    T = trace.times[-1] - trace.times[0]
    return float(np.trapezoid(err, trace.times) / T)
