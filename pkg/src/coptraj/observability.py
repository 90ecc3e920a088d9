"""Empirical observability Gramians from Taylor-expanded measurement Jacobians.

The chain: Lie derivatives of the measurement map along the (parameter-
augmented) dynamics give an n-th order Taylor approximation of the output
Jacobian around an anchor instant; integrating K^T K over a short horizon
yields a segment Gramian; summing segments along the whole trajectory gives
the trajectory Gramian whose smallest eigenvalue scores the worst-observed
direction.  Larger is better, so the scalar cost is its negative.

The augmented state is [state13, k_f, k_m]: zero-dynamics parameters, which
makes the Gramian score *parameter* observability.  Per the underlying
estimation model the inputs are rotor speeds (square roots of the command),
switchable back to squared speeds.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as _k
from .quadrotor import QuadrotorConstants, RotorParams
from .simulation import SimulationDiverged

_CHANNEL_SLICES = {
    "position": slice(0, 3),
    "quaternion": slice(6, 10),
    "gyro": slice(10, 13),
}


@dataclass(frozen=True)
class MeasurementModel:
    """Sensor channels measured from the (augmented) state and input."""
    channels: tuple = ("position", "quaternion", "gyro")
    include_params: bool = True
    constants: QuadrotorConstants = field(default_factory=QuadrotorConstants)

    def __post_init__(self):
        for ch in self.channels:
            if ch not in ("position", "quaternion", "gyro", "accel"):
                raise ValueError(f"unknown channel {ch!r}")
        if not self.channels:
            raise ValueError("need at least one channel")

    @property
    def n_h(self):
        n = 0
        for ch in self.channels:
            n += 3 if ch != "quaternion" else 4
        return n

    @property
    def n_x(self):
        return 15 if self.include_params else 13

    def evaluate(self, X, ustar, squared_inputs=False):
        """Channel stack for a state batch X of shape (n_x, B)."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[0] != self.n_x:
            X = X.T
        B = X.shape[1]
        rows = []
        for ch in self.channels:
            if ch == "accel":
                u = np.asarray(ustar, dtype=float)
                usq = u if squared_inputs else u * u
                kf = X[13] if self.include_params else np.full(B, np.nan)
                a = np.zeros((3, B))
                a[2] = kf * np.sum(usq) / self.constants.mass
                rows.append(a)
            else:
                rows.append(X[_CHANNEL_SLICES[ch]])
        return np.concatenate(rows, axis=0)


def lie_stack(h_fn, f_fn, x0, order, step_rel=1e-5):
    """Lie derivatives of h along f with their state gradients.

    h_fn and f_fn must accept column-batched states (n_x, B).  Gradients use
    nested central differences with a per-variable relative step, batched so
    a whole differentiation level is one call.  Returns (values, grads) with
    values[i] of shape (n_h,) and grads[i] of shape (n_h, n_x).
    """
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    n_x = x0.size
    # one step per variable, anchored at x0: reusing the same step at every
    # nesting level keeps the recursion stable (and exact for linear maps)
    steps = step_rel * np.maximum(1.0, np.abs(x0))

    def value(i, X):
        if i == 0:
            return np.asarray(h_fn(X))
        G = grad(i - 1, X)
        F = np.asarray(f_fn(X))
        return np.einsum("hxb,xb->hb", G, F)

    def grad(i, X):
        B = X.shape[1]
        big = np.empty((n_x, 2 * n_x * B))
        for j in range(n_x):
            c = 2 * j * B
            big[:, c:c + B] = X
            big[j, c:c + B] += steps[j]
            big[:, c + B:c + 2 * B] = X
            big[j, c + B:c + 2 * B] -= steps[j]
        V = value(i, big)
        n_h = V.shape[0]
        G = np.empty((n_h, n_x, B))
        for j in range(n_x):
            c = 2 * j * B
            G[:, j, :] = (V[:, c:c + B] - V[:, c + B:c + 2 * B]) / (2.0 * steps[j])
        return G

    X0 = x0[:, None]
    values, grads = [], []
    for i in range(order + 1):
        v = value(i, X0)[:, 0]
        g = grad(i, X0)[:, :, 0]
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(g))):
            raise RuntimeError(f"Lie derivative level {i} is not finite")
        values.append(v)
        grads.append(g)
    return values, grads


def taylor_jacobian(grads, dt):
    """Series approximation K = sum_i dt^i/i! * grad(L^i h) at offset dt."""
    K = np.zeros_like(grads[0])
    fact = 1.0
    for i, g in enumerate(grads):
        if i > 0:
            fact *= i
        K = K + (dt ** i / fact) * g
    return K


def _quad_nodes_weights(t_lo, t_hi, n_nodes):
    if n_nodes < 3 or n_nodes % 2 == 0:
        raise ValueError("quadrature needs an odd node count >= 3")
    ts = np.linspace(t_lo, t_hi, n_nodes)
    h = (t_hi - t_lo) / (n_nodes - 1)
    w = np.ones(n_nodes)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return ts, w * (h / 3.0)


def gramian_window(grads, t_lo, t_hi, n_nodes, scaling=None):
    """Simpson integral of K'(dt)^T K'(dt) over anchor offsets [t_lo, t_hi]."""
    ts, ws = _quad_nodes_weights(t_lo, t_hi, n_nodes)
    n_x = grads[0].shape[1]
    W = np.zeros((n_x, n_x))
    inv_s = None if scaling is None else 1.0 / np.asarray(scaling, dtype=float)
    for t, w in zip(ts, ws):
        K = taylor_jacobian(grads, t)
        if inv_s is not None:
            K = K * inv_s[None, :]
        W += w * (K.T @ K)
    return W


def segment_gramian(grads, H, n_nodes=5, scaling=None):
    """Observability quality of one horizon-H segment from its anchor."""
    return gramian_window(grads, 0.0, H, n_nodes, scaling)


@dataclass
class GramianAccumulator:
    """Running sum of segment Gramians with its eigenvalue summaries."""
    W: np.ndarray
    segment_count: int = 0
    scaling: Optional[np.ndarray] = None

    @staticmethod
    def empty(n_x, scaling=None):
        return GramianAccumulator(np.zeros((n_x, n_x)), 0, scaling)

    def add(self, W_seg):
        self.W = self.W + W_seg
        self.segment_count += 1
        return self

    def eigenvalues(self):
        return np.linalg.eigvalsh(self.W)

    @property
    def lambda_min(self):
        return float(self.eigenvalues()[0])

    @property
    def lambda_max(self):
        return float(self.eigenvalues()[-1])

    def check(self, sym_tol=1e-12, psd_tol=1e-9):
        """Symmetry and positive-semidefiniteness within tolerances."""
        scale = max(np.max(np.abs(self.W)), 1e-300)
        sym = np.max(np.abs(self.W - self.W.T)) <= sym_tol * scale
        ev = self.eigenvalues()
        psd = ev[0] >= -psd_tol * max(ev[-1], 0.0)
        return bool(sym and psd)


@dataclass(frozen=True)
class ObservabilityConfig:
    taylor_order: int = 2
    segments: int = 40
    quad_nodes: int = 5
    model: MeasurementModel = field(default_factory=MeasurementModel)
    scaling: Optional[np.ndarray] = None
    rotor_speed_inputs: bool = True
    fd_step_rel: float = 1e-5
    anchor: str = "closed_loop"   # or "reference"


def anchor_lie_stack(x13, u_cmd, p_c: RotorParams, c: QuadrotorConstants,
                     cfg: ObservabilityConfig):
    """Lie values/gradients at one anchor state and command."""
    model = cfg.model
    if cfg.rotor_speed_inputs:
        uin = np.sqrt(np.maximum(np.asarray(u_cmd, dtype=float), 0.0))
        squared = False
    else:
        uin = np.asarray(u_cmd, dtype=float)
        squared = True
    if model.include_params:
        xa = np.concatenate([np.asarray(x13, dtype=float),
                             [p_c.k_f, p_c.k_m]])
        if squared:
            def f_fn(X):
                return _k.dynamics_aug_batch(
                    np.ascontiguousarray(X), np.sqrt(uin), c.mass,
                    c.arm_length, c.gravity, c.inertia, c.inertia_inv)
        else:
            def f_fn(X):
                return _k.dynamics_aug_batch(
                    np.ascontiguousarray(X), uin, c.mass, c.arm_length,
                    c.gravity, c.inertia, c.inertia_inv)
    else:
        xa = np.asarray(x13, dtype=float)
        usq = uin * uin if not squared else uin

        def f_fn(X):
            X = np.ascontiguousarray(X)
            out = np.empty_like(X)
            for b in range(X.shape[1]):
                out[:, b] = _k.dynamics13(
                    np.ascontiguousarray(X[:, b]), usq, p_c.k_f, p_c.k_m,
                    c.mass, c.arm_length, c.gravity, c.inertia, c.inertia_inv)
            return out

    def h_fn(X):
        return model.evaluate(X, uin, squared_inputs=squared)

    return lie_stack(h_fn, f_fn, xa, cfg.taylor_order, cfg.fd_step_rel)


def e2log(a, ctx):
    """Trajectory Gramian: N equal segments summed along the nominal run.

    Anchors snap to the simulation output grid; anchor states/inputs come
    from the nominal closed-loop trace (or from the reference trajectory
    when the context is configured that way).
    """
    cfg = ctx.obs
    trace = ctx.simulation(a)
    if trace.diverged:
        raise SimulationDiverged(trace.t_last)
    T = ctx.duration
    N = cfg.segments
    if N < 1:
        raise ValueError("need at least one segment")
    H = T / N
    scaling = cfg.scaling
    if scaling is not None and len(scaling) != cfg.model.n_x:
        raise ValueError("scaling length must match the augmented state")
    acc = GramianAccumulator.empty(cfg.model.n_x, scaling)
    out_dt = trace.times[1] - trace.times[0]
    for k in range(N):
        idx = int(round(k * H / out_dt))
        idx = min(idx, len(trace.times) - 1)
        if cfg.anchor == "reference":
            x13, u = ctx.reference_anchor(a, trace.times[idx])
        else:
            x13, u = trace.states[idx], trace.inputs[idx]
        _, grads = anchor_lie_stack(x13, u, ctx.p_c, ctx.constants, cfg)
        acc.add(gramian_window(grads, 0.0, H, cfg.quad_nodes, scaling))
    return acc


def cost_e2log(a, ctx):
    """Negated smallest Gramian eigenvalue (smaller cost = better observed)."""
    try:
        acc = e2log(a, ctx)
    except SimulationDiverged:
        ctx.record_failure("e2log")
        return ctx.penalty
    return -acc.lambda_min
