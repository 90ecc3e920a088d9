"""Numba-compiled hot loops.

Everything here works on flat float64 arrays so the closed-loop simulation,
the finite-difference Jacobians and the sensitivity propagation run at
compiled speed.  The public modules wrap these kernels with validated,
documented interfaces; nothing outside the package should import this module.

State layout (13): [rx ry rz  vx vy vz  qw qx qy qz  wx wy wz]
Sim state (16):    [state13, xi_x xi_y xi_z]
Sensitivity state (48): [sim16, Pi (13x2 row-major), Pi_xi (3x2 row-major)]

Scalar parameter vector ``par`` (11):
  [m, g, ell, kf_real, km_real, kf_nom, km_nom, u_min, u_max, xi_lim, f_eps]
"""

import numpy as np
from numba import njit

N_X = 13
N_Z = 16
N_U = 4
N_P = 2
N_S = N_Z + N_X * N_P + 3 * N_P  # 48

# par indices
P_M, P_G, P_ELL, P_KF, P_KM, P_KFN, P_KMN, P_UMIN, P_UMAX, P_XILIM, P_FEPS = range(11)


# ---------------------------------------------------------------------------
# quaternion algebra (Hamilton, scalar first, body-to-world sandwich)
# ---------------------------------------------------------------------------

@njit(cache=True)
def quat_mul(a, b):
    out = np.empty(4)
    out[0] = a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3]
    out[1] = a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2]
    out[2] = a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1]
    out[3] = a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]
    return out


@njit(cache=True)
def quat_norm(q):
    return np.sqrt(q[0] * q[0] + q[1] * q[1] + q[2] * q[2] + q[3] * q[3])


@njit(cache=True)
def quat_normalize(q):
    n = quat_norm(q)
    return q / n


@njit(cache=True)
def quat_to_rot(q):
    """Body-to-world rotation matrix of a unit quaternion."""
    w, x, y, z = q[0], q[1], q[2], q[3]
    R = np.empty((3, 3))
    R[0, 0] = 1.0 - 2.0 * (y * y + z * z)
    R[0, 1] = 2.0 * (x * y - w * z)
    R[0, 2] = 2.0 * (x * z + w * y)
    R[1, 0] = 2.0 * (x * y + w * z)
    R[1, 1] = 1.0 - 2.0 * (x * x + z * z)
    R[1, 2] = 2.0 * (y * z - w * x)
    R[2, 0] = 2.0 * (x * z - w * y)
    R[2, 1] = 2.0 * (y * z + w * x)
    R[2, 2] = 1.0 - 2.0 * (x * x + y * y)
    return R


@njit(cache=True)
def quat_rotate(q, v):
    return quat_to_rot(q) @ v


@njit(cache=True)
def cross3(a, b):
    out = np.empty(3)
    out[0] = a[1] * b[2] - a[2] * b[1]
    out[1] = a[2] * b[0] - a[0] * b[2]
    out[2] = a[0] * b[1] - a[1] * b[0]
    return out


# ---------------------------------------------------------------------------
# plant
# ---------------------------------------------------------------------------

@njit(cache=True)
def wrench_from_u(u, kf, km, ell):
    """Total thrust and body torques from squared rotor speeds."""
    out = np.empty(4)
    out[0] = kf * (u[0] + u[1] + u[2] + u[3])
    out[1] = kf * ell * (u[1] - u[3])
    out[2] = kf * ell * (u[2] - u[0])
    out[3] = kf * km * (u[0] - u[1] + u[2] - u[3])
    return out


@njit(cache=True)
def dynamics13(x, u, kf, km, m, ell, g, J, Jinv):
    """Rigid-body quadrotor state derivative; q is normalized on use."""
    dx = np.empty(N_X)
    q = quat_normalize(x[6:10])
    w = x[10:13]
    fr = wrench_from_u(u, kf, km, ell)
    R = quat_to_rot(q)
    # translational
    dx[0] = x[3]
    dx[1] = x[4]
    dx[2] = x[5]
    a = fr[0] / m
    dx[3] = a * R[0, 2]
    dx[4] = a * R[1, 2]
    dx[5] = a * R[2, 2] - g
    # quaternion kinematics: qdot = 0.5 * q ⊗ (0, w)
    dx[6] = 0.5 * (-q[1] * w[0] - q[2] * w[1] - q[3] * w[2])
    dx[7] = 0.5 * (q[0] * w[0] + q[2] * w[2] - q[3] * w[1])
    dx[8] = 0.5 * (q[0] * w[1] - q[1] * w[2] + q[3] * w[0])
    dx[9] = 0.5 * (q[0] * w[2] + q[1] * w[1] - q[2] * w[0])
    # rotational: J wdot = tau - w x (J w)
    Jw = J @ w
    gyr = cross3(w, Jw)
    tq = np.empty(3)
    tq[0] = fr[1] - gyr[0]
    tq[1] = fr[2] - gyr[1]
    tq[2] = fr[3] - gyr[2]
    dw = Jinv @ tq
    dx[10] = dw[0]
    dx[11] = dw[1]
    dx[12] = dw[2]
    return dx


# ---------------------------------------------------------------------------
# piecewise Bezier evaluation
# ---------------------------------------------------------------------------

@njit(cache=True)
def bezier_piece_eval(ctrl, s, order, dur):
    """Evaluate one Bezier piece (ctrl: n_dim x n_c) at s in [0,1].

    Derivatives via the hodograph (forward differences of control points),
    then de Casteljau, then 1/dur**order time rescaling.
    """
    n_dim, n_c = ctrl.shape
    d = n_c - 1
    out = np.zeros(n_dim)
    if order > d:
        return out
    work = ctrl.copy()
    m = n_c
    for k in range(order):
        for j in range(m - 1):
            for i in range(n_dim):
                work[i, j] = (work[i, j + 1] - work[i, j]) * (d - k)
        m -= 1
    for r in range(1, m):
        for j in range(m - r):
            for i in range(n_dim):
                work[i, j] = (1.0 - s) * work[i, j] + s * work[i, j + 1]
    scale = dur ** order
    for i in range(n_dim):
        out[i] = work[i, 0] / scale
    return out


@njit(cache=True)
def traj_locate(times, t):
    n = times.shape[0] - 1
    i = 0
    while i < n - 1 and t >= times[i + 1]:
        i += 1
    return i


@njit(cache=True)
def traj_eval(times, ctrl, t, order):
    i = traj_locate(times, t)
    dur = times[i + 1] - times[i]
    s = (t - times[i]) / dur
    return bezier_piece_eval(ctrl[i], s, order, dur)


@njit(cache=True)
def ref_state(times, ctrl, t):
    """Reference value, first and second derivative at t: (3, n_dim)."""
    i = traj_locate(times, t)
    dur = times[i + 1] - times[i]
    s = (t - times[i]) / dur
    n_dim = ctrl.shape[1]
    out = np.empty((3, n_dim))
    for k in range(3):
        out[k] = bezier_piece_eval(ctrl[i], s, k, dur)
    return out


# ---------------------------------------------------------------------------
# controller
# ---------------------------------------------------------------------------

@njit(cache=True)
def control_law(x, xi, ref, gains, par, Sinv):
    """Unclamped squared rotor speeds of the geometric tracking law.

    gains rows: k_r, k_v, k_i, k_q, k_w (one gain per axis).
    Returns NaNs when the desired force vector degenerates.
    """
    m = par[P_M]
    g = par[P_G]
    xilim = par[P_XILIM]
    q = quat_normalize(x[6:10])
    R = quat_to_rot(q)
    fdes = np.empty(3)
    for i in range(3):
        xi_eff = xi[i]
        if xi_eff > xilim:
            xi_eff = xilim
        elif xi_eff < -xilim:
            xi_eff = -xilim
        e_r = x[i] - ref[0, i]
        e_v = x[3 + i] - ref[1, i]
        ff = g if i == 2 else 0.0
        fdes[i] = (-gains[0, i] * e_r - gains[1, i] * e_v - gains[2, i] * xi_eff
                   + m * (ff + ref[2, i]))
    # scalar thrust: projection of the desired force on the body z axis
    f = fdes[0] * R[0, 2] + fdes[1] * R[1, 2] + fdes[2] * R[2, 2]
    fn = np.sqrt(fdes[0] ** 2 + fdes[1] ** 2 + fdes[2] ** 2)
    u = np.empty(4)
    if fn < par[P_FEPS]:
        u[:] = np.nan
        return u
    b3 = fdes / fn
    yaw = ref[0, 3]
    b1h = np.empty(3)
    b1h[0] = np.cos(yaw)
    b1h[1] = np.sin(yaw)
    b1h[2] = 0.0
    b2 = cross3(b3, b1h)
    b2n = np.sqrt(b2[0] ** 2 + b2[1] ** 2 + b2[2] ** 2)
    if b2n < 1e-9:
        u[:] = np.nan
        return u
    b2 = b2 / b2n
    b1 = cross3(b2, b3)
    # e_q = 0.5 * vee(Rd^T R - R^T Rd) with Rd columns (b1, b2, b3)
    A = np.empty((3, 3))
    for jj in range(3):
        A[0, jj] = b1[0] * R[0, jj] + b1[1] * R[1, jj] + b1[2] * R[2, jj]
        A[1, jj] = b2[0] * R[0, jj] + b2[1] * R[1, jj] + b2[2] * R[2, jj]
        A[2, jj] = b3[0] * R[0, jj] + b3[1] * R[1, jj] + b3[2] * R[2, jj]
    eq = np.empty(3)
    eq[0] = 0.5 * (A[2, 1] - A[1, 2])
    eq[1] = 0.5 * (A[0, 2] - A[2, 0])
    eq[2] = 0.5 * (A[1, 0] - A[0, 1])
    wrench = np.empty(4)
    wrench[0] = f
    for i in range(3):
        wrench[1 + i] = -gains[3, i] * eq[i] - gains[4, i] * x[10 + i]
    return Sinv @ wrench


@njit(cache=True)
def clamp_u(u, umin, umax):
    out = np.empty(4)
    sat = 0
    for i in range(4):
        v = u[i]
        if v < umin:
            v = umin
            sat = 1
        elif v > umax:
            v = umax
            sat = 1
        out[i] = v
    return out, sat


# ---------------------------------------------------------------------------
# closed-loop right-hand side and fixed-step simulation
# ---------------------------------------------------------------------------

@njit(cache=True)
def closed_loop_rhs(t, z, times, ctrl, gains, par, Sinv, J, Jinv):
    """dz/dt of [state13, xi]; plant at (kf_real, km_real), control at nominal."""
    dz = np.empty(N_Z)
    ref = ref_state(times, ctrl, t)
    u_unc = control_law(z[:N_X], z[N_X:N_Z], ref, gains, par, Sinv)
    u, sat = clamp_u(u_unc, par[P_UMIN], par[P_UMAX])
    dz[:N_X] = dynamics13(z[:N_X], u, par[P_KF], par[P_KM], par[P_M],
                          par[P_ELL], par[P_G], J, Jinv)
    for i in range(3):
        dz[N_X + i] = z[i] - ref[0, i]
    return dz, sat


@njit(cache=True)
def _state_ok(z):
    for i in range(N_Z):
        if not np.isfinite(z[i]):
            return False
    r2 = z[0] ** 2 + z[1] ** 2 + z[2] ** 2
    v2 = z[3] ** 2 + z[4] ** 2 + z[5] ** 2
    return r2 < 1.0e8 and v2 < 1.0e6


@njit(cache=True)
def simulate_fixed(z0, T, dt, out_dt, times, ctrl, gains, par, Sinv, J, Jinv):
    """Classical RK4 with per-step quaternion renormalization.

    The effective step divides the output interval exactly (never larger
    than the requested dt).  Returns the uniform output grid, the states,
    the clamped inputs, per-sample saturation flags, a diverged flag and
    the last valid time.
    """
    n_out = int(np.rint(T / out_dt))
    n_sub = int(np.ceil(out_dt / dt - 1e-12))
    if n_sub < 1:
        n_sub = 1
    h = out_dt / n_sub
    ts = np.empty(n_out + 1)
    Z = np.empty((n_out + 1, N_Z))
    U = np.empty((n_out + 1, N_U))
    sat = np.zeros(n_out + 1, dtype=np.int64)
    z = z0.copy()
    z[6:10] = quat_normalize(z[6:10])
    diverged = False
    t_last = 0.0
    k_last = 0
    for k in range(n_out + 1):
        t = k * out_dt
        ts[k] = t
        Z[k] = z
        ref = ref_state(times, ctrl, t)
        u_unc = control_law(z[:N_X], z[N_X:N_Z], ref, gains, par, Sinv)
        u, s = clamp_u(u_unc, par[P_UMIN], par[P_UMAX])
        U[k] = u
        sat[k] = s
        t_last = t
        k_last = k
        if k == n_out:
            break
        for j in range(n_sub):
            tj = t + j * h
            k1, s1 = closed_loop_rhs(tj, z, times, ctrl, gains, par, Sinv, J, Jinv)
            k2, _ = closed_loop_rhs(tj + 0.5 * h, z + 0.5 * h * k1, times, ctrl, gains, par, Sinv, J, Jinv)
            k3, _ = closed_loop_rhs(tj + 0.5 * h, z + 0.5 * h * k2, times, ctrl, gains, par, Sinv, J, Jinv)
            k4, _ = closed_loop_rhs(tj + h, z + h * k3, times, ctrl, gains, par, Sinv, J, Jinv)
            z = z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if not _state_ok(z):
                diverged = True
                break
            z[6:10] = quat_normalize(z[6:10])
        if diverged:
            break
    if diverged:
        for k in range(k_last + 1, n_out + 1):
            ts[k] = k * out_dt
            Z[k] = Z[k_last]
            U[k] = U[k_last]
            sat[k] = sat[k_last]
    return ts, Z, U, sat, diverged, t_last


# ---------------------------------------------------------------------------
# finite-difference Jacobians of the closed loop
# ---------------------------------------------------------------------------

@njit(cache=True)
def _fd_step(v):
    a = abs(v)
    if a < 1.0:
        a = 1.0
    return 1e-6 * a


@njit(cache=True)
def _perturb_state(x, j, h):
    xp = x.copy()
    xp[j] += h
    if 6 <= j < 10:
        xp[6:10] = quat_normalize(xp[6:10])
    return xp


@njit(cache=True)
def jacobians_fd(t, x, xi, u_op, times, ctrl, gains, par, Sinv, J, Jinv):
    """Central-difference Jacobian blocks of the closed loop at one instant.

    Quaternion components are perturbed then renormalized.  The control law
    is differentiated unclamped; the plant is evaluated at the operating
    input u_op.  Returns (f_x, f_u, f_p, c_x, c_xi).
    """
    kf = par[P_KFN]
    km = par[P_KMN]
    m = par[P_M]
    ell = par[P_ELL]
    g = par[P_G]
    ref = ref_state(times, ctrl, t)

    f_x = np.empty((N_X, N_X))
    for j in range(N_X):
        h = _fd_step(x[j])
        fp = dynamics13(_perturb_state(x, j, h), u_op, kf, km, m, ell, g, J, Jinv)
        fm = dynamics13(_perturb_state(x, j, -h), u_op, kf, km, m, ell, g, J, Jinv)
        for i in range(N_X):
            f_x[i, j] = (fp[i] - fm[i]) / (2.0 * h)

    f_u = np.empty((N_X, N_U))
    for j in range(N_U):
        h = _fd_step(u_op[j])
        up = u_op.copy()
        up[j] += h
        um = u_op.copy()
        um[j] -= h
        fp = dynamics13(x, up, kf, km, m, ell, g, J, Jinv)
        fm = dynamics13(x, um, kf, km, m, ell, g, J, Jinv)
        for i in range(N_X):
            f_u[i, j] = (fp[i] - fm[i]) / (2.0 * h)

    f_p = np.empty((N_X, N_P))
    for j in range(N_P):
        pv = kf if j == 0 else km
        # parameters are orders of magnitude below 1; always step relative
        h = 1e-6 * abs(pv) if pv != 0.0 else 1e-12
        if j == 0:
            fp = dynamics13(x, u_op, kf + h, km, m, ell, g, J, Jinv)
            fm = dynamics13(x, u_op, kf - h, km, m, ell, g, J, Jinv)
        else:
            fp = dynamics13(x, u_op, kf, km + h, m, ell, g, J, Jinv)
            fm = dynamics13(x, u_op, kf, km - h, m, ell, g, J, Jinv)
        for i in range(N_X):
            f_p[i, j] = (fp[i] - fm[i]) / (2.0 * h)

    c_x = np.empty((N_U, N_X))
    for j in range(N_X):
        h = _fd_step(x[j])
        cp = control_law(_perturb_state(x, j, h), xi, ref, gains, par, Sinv)
        cm = control_law(_perturb_state(x, j, -h), xi, ref, gains, par, Sinv)
        for i in range(N_U):
            c_x[i, j] = (cp[i] - cm[i]) / (2.0 * h)

    c_xi = np.empty((N_U, 3))
    for j in range(3):
        h = _fd_step(xi[j])
        xp = xi.copy()
        xp[j] += h
        xm = xi.copy()
        xm[j] -= h
        cp = control_law(x, xp, ref, gains, par, Sinv)
        cm = control_law(x, xm, ref, gains, par, Sinv)
        for i in range(N_U):
            c_xi[i, j] = (cp[i] - cm[i]) / (2.0 * h)

    return f_x, f_u, f_p, c_x, c_xi


# ---------------------------------------------------------------------------
# sensitivity propagation
# ---------------------------------------------------------------------------

@njit(cache=True)
def sensitivity_rhs(t, s, times, ctrl, gains, par, Sinv, J, Jinv):
    """Joint derivative of the closed loop and its parameter sensitivities.

    Pi follows  f_x Pi + f_u Theta + f_p  with Theta = c_x Pi + c_xi Pi_xi;
    Pi_xi follows the position-error integrator rows of Pi.  The closed
    loop itself runs at the nominal parameters.
    """
    ds = np.empty(N_S)
    x = s[:N_X]
    xi = s[N_X:N_Z]
    ref = ref_state(times, ctrl, t)
    u_unc = control_law(x, xi, ref, gains, par, Sinv)
    u_op, sat = clamp_u(u_unc, par[P_UMIN], par[P_UMAX])
    ds[:N_X] = dynamics13(x, u_op, par[P_KFN], par[P_KMN], par[P_M],
                          par[P_ELL], par[P_G], J, Jinv)
    for i in range(3):
        ds[N_X + i] = x[i] - ref[0, i]

    f_x, f_u, f_p, c_x, c_xi = jacobians_fd(
        t, x, xi, u_op, times, ctrl, gains, par, Sinv, J, Jinv)

    Pi = s[N_Z:N_Z + N_X * N_P].copy().reshape(N_X, N_P)
    Pxi = s[N_Z + N_X * N_P:].copy().reshape(3, N_P)
    Theta = c_x @ Pi + c_xi @ Pxi
    dPi = f_x @ Pi + f_u @ Theta + f_p
    dPxi = Pi[0:3, :].copy()
    ds[N_Z:N_Z + N_X * N_P] = dPi.ravel()
    ds[N_Z + N_X * N_P:] = dPxi.ravel()
    return ds, sat


@njit(cache=True)
def propagate_fixed(s0, T, dt, out_dt, times, ctrl, gains, par, Sinv, J, Jinv):
    """RK4 on the sensitivity-augmented system, sampled on a uniform grid.

    Returns (ts, Z16, U, Pi, Pi_xi, Theta, sat, diverged, t_last); Theta is
    assembled algebraically at the output instants.
    """
    n_out = int(np.rint(T / out_dt))
    n_sub = int(np.ceil(out_dt / dt - 1e-12))
    if n_sub < 1:
        n_sub = 1
    h = out_dt / n_sub
    ts = np.empty(n_out + 1)
    Z = np.empty((n_out + 1, N_Z))
    U = np.empty((n_out + 1, N_U))
    PI = np.empty((n_out + 1, N_X, N_P))
    PXI = np.empty((n_out + 1, 3, N_P))
    TH = np.empty((n_out + 1, N_U, N_P))
    sat = np.zeros(n_out + 1, dtype=np.int64)
    s = s0.copy()
    s[6:10] = quat_normalize(s[6:10])
    diverged = False
    t_last = 0.0
    k_last = 0
    for k in range(n_out + 1):
        t = k * out_dt
        ts[k] = t
        Z[k] = s[:N_Z]
        PI[k] = s[N_Z:N_Z + N_X * N_P].copy().reshape(N_X, N_P)
        PXI[k] = s[N_Z + N_X * N_P:].copy().reshape(3, N_P)
        ref = ref_state(times, ctrl, t)
        u_unc = control_law(s[:N_X], s[N_X:N_Z], ref, gains, par, Sinv)
        u_op, sflag = clamp_u(u_unc, par[P_UMIN], par[P_UMAX])
        U[k] = u_op
        sat[k] = sflag
        _, _, _, c_x, c_xi = jacobians_fd(
            t, s[:N_X], s[N_X:N_Z], u_op, times, ctrl, gains, par, Sinv, J, Jinv)
        TH[k] = c_x @ PI[k] + c_xi @ PXI[k]
        t_last = t
        k_last = k
        if k == n_out:
            break
        for j in range(n_sub):
            tj = t + j * h
            k1, s1 = sensitivity_rhs(tj, s, times, ctrl, gains, par, Sinv, J, Jinv)
            k2, _ = sensitivity_rhs(tj + 0.5 * h, s + 0.5 * h * k1, times, ctrl, gains, par, Sinv, J, Jinv)
            k3, _ = sensitivity_rhs(tj + 0.5 * h, s + 0.5 * h * k2, times, ctrl, gains, par, Sinv, J, Jinv)
            k4, _ = sensitivity_rhs(tj + h, s + h * k3, times, ctrl, gains, par, Sinv, J, Jinv)
            s = s + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            ok = True
            for i in range(N_S):
                if not np.isfinite(s[i]):
                    ok = False
                    break
            if ok:
                ok = _state_ok(s[:N_Z])
            if not ok:
                diverged = True
                break
            s[6:10] = quat_normalize(s[6:10])
        if diverged:
            break
    if diverged:
        for k in range(k_last + 1, n_out + 1):
            ts[k] = k * out_dt
            Z[k] = Z[k_last]
            U[k] = U[k_last]
            PI[k] = PI[k_last]
            PXI[k] = PXI[k_last]
            TH[k] = TH[k_last]
            sat[k] = sat[k_last]
    return ts, Z, U, PI, PXI, TH, sat, diverged, t_last


# ---------------------------------------------------------------------------
# parameter-augmented dynamics for the observability machinery
# ---------------------------------------------------------------------------

@njit(cache=True)
def dynamics_aug(xa, ustar, m, ell, g, J, Jinv):
    """Derivative of [state13, kf, km] driven by rotor speeds (not squared)."""
    out = np.empty(15)
    u = ustar * ustar
    out[:N_X] = dynamics13(xa[:N_X], u, xa[13], xa[14], m, ell, g, J, Jinv)
    out[13] = 0.0
    out[14] = 0.0
    return out


@njit(cache=True)
def dynamics_aug_batch(X, ustar, m, ell, g, J, Jinv):
    """Column-batched version of dynamics_aug; X is (15, B)."""
    B = X.shape[1]
    out = np.empty((15, B))
    for b in range(B):
        out[:, b] = dynamics_aug(X[:, b].copy(), ustar, m, ell, g, J, Jinv)
    return out
