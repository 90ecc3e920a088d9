"""Closed-loop parameter sensitivities and the control-aware costs.

The state sensitivity Pi = dx/dp and controller-state sensitivity Pi_xi
propagate through the linear time-varying system

    Pi'    = f_x Pi + f_u Theta + f_p          Pi(0)    = 0
    Pi_xi' = g_x Pi + g_xi Pi_xi               Pi_xi(0) = 0
    Theta  = c_x Pi + c_xi Pi_xi

evaluated along the nominal closed loop (p = p_c).  All Jacobian blocks use
central finite differences so the plant and controller stay swappable; the
integrator clamp is excluded from the differentiated law, and runs where the
clamp was active are flagged because the propagated values are then only
approximate.
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels as _k
from .controller import ControllerGains, _pack_par
from .quadrotor import QuadrotorConstants, RotorParams, allocation_matrix
from .simulation import IntegratorOptions, SimTrace, SimulationDiverged, _check_span
from scipy.integrate import solve_ivp

N_X, N_U, N_P = _k.N_X, _k.N_U, _k.N_P


@dataclass
class JacobianSet:
    """Closed-loop Jacobian blocks at one instant."""
    f_x: np.ndarray   # (13, 13)
    f_u: np.ndarray   # (13, 4)
    f_p: np.ndarray   # (13, 2)
    g_x: np.ndarray   # (3, 13)
    g_xi: np.ndarray  # (3, 3)
    c_x: np.ndarray   # (4, 13)
    c_xi: np.ndarray  # (4, 3)


def jacobians(x, xi, t, traj, p_c: RotorParams, c: QuadrotorConstants,
              gains: ControllerGains):
    """Finite-difference Jacobians of plant, integrator and control law.

    Quaternion components are perturbed and renormalized; steps are
    1e-6 * max(1, |v|) per state/input variable and purely relative for the
    physical parameters (which sit far below unity).
    """
    x = np.asarray(x, dtype=float)
    xi = np.asarray(xi, dtype=float)
    par = _pack_par(p_c, p_c, c, gains)
    Sinv = np.linalg.inv(allocation_matrix(p_c, c))
    G = gains.as_matrix()
    ref = _k.ref_state(traj.times, traj.ctrl, float(t))
    u_unc = _k.control_law(x, xi, ref, G, par, Sinv)
    u_op, _ = _k.clamp_u(u_unc, c.u_min, c.u_max)
    f_x, f_u, f_p, c_x, c_xi = _k.jacobians_fd(
        float(t), x, xi, u_op, traj.times, traj.ctrl, G, par, Sinv,
        c.inertia, c.inertia_inv)
    for m in (f_x, f_u, f_p, c_x, c_xi):
        if not np.all(np.isfinite(m)):
            raise RuntimeError("numerical Jacobian produced non-finite entries")
    g_x = np.zeros((3, N_X))
    g_x[:, 0:3] = np.eye(3)
    return JacobianSet(f_x, f_u, f_p, g_x, np.zeros((3, 3)), c_x, c_xi)


def propagate(traj, x0, xi0, p_c: RotorParams, c: QuadrotorConstants,
              gains: ControllerGains, T, opts: IntegratorOptions = IntegratorOptions(),
              pi0=None, pixi0=None, strict=False):
    """Simulate the nominal closed loop jointly with its sensitivities.

    Returns a SimTrace whose pi/pi_xi/theta fields are filled on the output
    grid.  pi0/pixi0 default to zero (the defining initial conditions); they
    are accepted mainly so linearity properties can be exercised.
    """
    _check_span(traj, T)
    s0 = np.zeros(_k.N_S)
    s0[0:13] = np.asarray(x0, dtype=float)
    s0[13:16] = np.asarray(xi0, dtype=float)
    if pi0 is not None:
        s0[16:16 + 26] = np.asarray(pi0, dtype=float).ravel()
    if pixi0 is not None:
        s0[16 + 26:] = np.asarray(pixi0, dtype=float).ravel()
    par = _pack_par(p_c, p_c, c, gains)
    Sinv = np.linalg.inv(allocation_matrix(p_c, c))
    G = gains.as_matrix()
    out_dt = 1.0 / opts.output_rate

    if opts.method == "rk4":
        ts, Z, U, PI, PXI, TH, sat, diverged, t_last = _k.propagate_fixed(
            s0, T, opts.fixed_step, out_dt, traj.times, traj.ctrl, G, par,
            Sinv, c.inertia, c.inertia_inv)
    else:
        ts, Z, U, PI, PXI, TH, sat, diverged, t_last = _propagate_adaptive(
            s0, T, out_dt, traj, G, par, Sinv, c, opts)

    trace = SimTrace(ts, Z[:, 0:13], Z[:, 13:16], U, sat.astype(bool),
                     bool(diverged), float(t_last), pi=PI, pi_xi=PXI, theta=TH)
    if strict and trace.diverged:
        raise SimulationDiverged(trace.t_last)
    return trace


def _propagate_adaptive(s0, T, out_dt, traj, G, par, Sinv, c, opts):
    times, ctrl = traj.times, traj.ctrl
    J, Jinv = c.inertia, c.inertia_inv

    def rhs(t, s):
        ds, _ = _k.sensitivity_rhs(t, s, times, ctrl, G, par, Sinv, J, Jinv)
        return ds

    n_out = int(np.rint(T / out_dt))
    ts = np.arange(n_out + 1) * out_dt
    res = solve_ivp(rhs, (0.0, T), s0, method="RK45", t_eval=ts,
                    rtol=opts.rel_tol, atol=opts.abs_tol)
    S = np.full((n_out + 1, _k.N_S), np.nan)
    S[:res.y.shape[1]] = res.y.T
    diverged = not res.success
    k_last = res.y.shape[1] - 1
    for k in range(res.y.shape[1]):
        if not np.all(np.isfinite(S[k])):
            diverged = True
            k_last = max(k - 1, 0)
            break
        n = np.linalg.norm(S[k, 6:10])
        S[k, 6:10] /= n
    if diverged:
        for k in range(k_last + 1, n_out + 1):
            S[k] = S[k_last]
    Z = S[:, 0:16]
    PI = S[:, 16:42].reshape(-1, 13, 2)
    PXI = S[:, 42:48].reshape(-1, 3, 2)
    U = np.empty((n_out + 1, 4))
    TH = np.empty((n_out + 1, 4, 2))
    sat = np.zeros(n_out + 1, dtype=np.int64)
    for k in range(n_out + 1):
        u_unc = _k.control_law(np.ascontiguousarray(S[k, 0:13]),
                               np.ascontiguousarray(S[k, 13:16]),
                               _k.ref_state(times, ctrl, ts[k]), G, par, Sinv)
        U[k], sat[k] = _k.clamp_u(u_unc, par[_k.P_UMIN], par[_k.P_UMAX])
        _, _, _, c_x, c_xi = _k.jacobians_fd(
            ts[k], np.ascontiguousarray(S[k, 0:13]),
            np.ascontiguousarray(S[k, 13:16]), U[k], times, ctrl, G, par,
            Sinv, J, Jinv)
        TH[k] = c_x @ PI[k] + c_xi @ PXI[k]
    return ts, Z, U, PI, PXI, TH, sat, diverged, ts[k_last] if diverged else T


_POSITION_ROWS = np.arange(3)


def _matrix_norms(mats, norm):
    if norm == "fro":
        return np.sqrt(np.sum(mats ** 2, axis=(1, 2)))
    if norm == "spec":
        return np.array([np.linalg.norm(m, 2) for m in mats])
    raise ValueError("norm must be 'fro' or 'spec'")


def integral_matrix_norm(times, mats, norm="fro"):
    """Trapezoidal integral of a matrix norm sampled on a time grid."""
    return float(np.trapezoid(_matrix_norms(mats, norm), times))


def state_cost_from_trace(trace: SimTrace, rows="position", norm="fro"):
    sel = _POSITION_ROWS if rows == "position" else np.arange(N_X)
    return integral_matrix_norm(trace.times, trace.pi[:, sel, :], norm)


def input_cost_from_trace(trace: SimTrace, norm="fro"):
    return integral_matrix_norm(trace.times, trace.theta, norm)


def cost_pi(a, ctx):
    """Integral state-sensitivity cost of the decision vector a.

    Diverged propagations return the context penalty constant and are
    counted on the context rather than raising, so optimizers can keep
    going.
    """
    trace = ctx.propagation(a)
    if trace.diverged:
        ctx.record_failure("pi")
        return ctx.penalty
    return state_cost_from_trace(trace, ctx.rows, ctx.norm)


def cost_theta(a, ctx):
    """Integral input-sensitivity cost of the decision vector a."""
    trace = ctx.propagation(a)
    if trace.diverged:
        ctx.record_failure("theta")
        return ctx.penalty
    return input_cost_from_trace(trace, ctx.norm)
