"""Shared evaluation plumbing for the trajectory costs.

An EvaluationContext binds the way-point plan template, the physical and
controller configuration and the integrator choices, and memoizes the
expensive intermediate results (curve, nominal simulation, sensitivity
propagation, rotor-bound violation) per decision vector so an objective and
its constraints evaluated at the same point cost one run, not several.
"""

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import _kernels as _k
from .controller import ControllerGains, _pack_par
from .observability import ObservabilityConfig
from .quadrotor import QuadrotorConstants, RotorParams, allocation_matrix, hover_state
from .sensitivity import propagate
from .simulation import IntegratorOptions, simulate
from .trajectory import WaypointPlan

_CACHE_KINDS = ("traj", "sim", "prop", "violation")


@dataclass
class EvaluationContext:
    plan: WaypointPlan
    p_c: RotorParams
    constants: QuadrotorConstants
    gains: ControllerGains
    sim_opts: IntegratorOptions
    sens_opts: IntegratorOptions
    obs: ObservabilityConfig
    rows: str = "position"
    norm: str = "fro"
    penalty: float = 1e9
    cache_size: int = 12
    failures: dict = field(default_factory=dict)
    saturated_runs: int = 0

    def __post_init__(self):
        self._cache = {kind: {} for kind in _CACHE_KINDS}
        self._order = {kind: [] for kind in _CACHE_KINDS}

    @property
    def duration(self):
        return float(self.plan.times[-1] - self.plan.times[0])

    def initial_state(self):
        head = self.plan.boundary[0, :, 0]
        return hover_state(head[0:3], head[3] if self.plan.n_dim > 3 else 0.0)

    def record_failure(self, objective):
        self.failures[objective] = self.failures.get(objective, 0) + 1

    # -- memoized evaluations -------------------------------------------

    def _memo(self, kind, a, build):
        key = np.asarray(a, dtype=float).tobytes()
        store = self._cache[kind]
        if key not in store:
            store[key] = build()
            order = self._order[kind]
            order.append(key)
            if len(order) > self.cache_size:
                store.pop(order.pop(0), None)
        return store[key]

    def trajectory(self, a):
        return self._memo("traj", a, lambda: self.plan.with_params(a).build())

    def simulation(self, a):
        """Nominal closed-loop trace (plant at p_c)."""
        def build():
            tr = simulate(self.initial_state(), np.zeros(3), self.trajectory(a),
                          self.p_c, self.p_c, self.constants, self.gains,
                          self.duration, self.sim_opts)
            if tr.saturation_count:
                self.saturated_runs += 1
            return tr
        return self._memo("sim", a, build)

    def propagation(self, a):
        """Nominal trace with the sensitivity bundle attached."""
        def build():
            tr = propagate(self.trajectory(a), self.initial_state(), np.zeros(3),
                           self.p_c, self.constants, self.gains, self.duration,
                           self.sens_opts)
            if tr.saturation_count:
                self.saturated_runs += 1
            return tr
        return self._memo("prop", a, build)

    def _any_trace(self, a):
        """Cheapest available nominal trace (propagation if already cached)."""
        key = np.asarray(a, dtype=float).tobytes()
        if key in self._cache["prop"]:
            return self._cache["prop"][key]
        return self.simulation(a)

    def rotor_violation(self, a):
        """Worst unclamped command excursion beyond [u_min, u_max].

        Aggregated over the nominal run's output grid: feasible trajectories
        give a value <= 0.  Diverged runs count as maximally infeasible.
        """
        def build():
            tr = self._any_trace(a)
            if tr.diverged:
                return self.penalty
            par = _pack_par(self.p_c, self.p_c, self.constants, self.gains)
            Sinv = np.linalg.inv(allocation_matrix(self.p_c, self.constants))
            G = self.gains.as_matrix()
            traj = self.trajectory(a)
            worst = -np.inf
            for k in range(len(tr.times)):
                ref = _k.ref_state(traj.times, traj.ctrl, tr.times[k])
                u = _k.control_law(tr.states[k], tr.controller_states[k],
                                   ref, G, par, Sinv)
                worst = max(worst,
                            float(np.max(u - self.constants.u_max)),
                            float(np.max(self.constants.u_min - u)))
            return worst
        return self._memo("violation", a, build)

    def reference_anchor(self, a, t):
        """Anchor built from the reference instead of the simulated loop.

        Flat-output approximation: position/velocity from the curve, the
        attitude from the desired-force direction, zero body rates, and the
        hover-distributed thrust matching the feedforward acceleration.
        """
        from .controller import desired_attitude
        traj = self.trajectory(a)
        val = traj.evaluate(t, 0)
        vel = traj.evaluate(t, 1)
        acc = traj.evaluate(t, 2)
        c = self.constants
        fvec = c.mass * (np.array([0.0, 0.0, c.gravity]) + acc[0:3])
        R = desired_attitude(fvec, val[3])
        tr = np.trace(R)
        qw = 0.5 * np.sqrt(max(1.0 + tr, 1e-12))
        q = np.array([qw,
                      (R[2, 1] - R[1, 2]) / (4 * qw),
                      (R[0, 2] - R[2, 0]) / (4 * qw),
                      (R[1, 0] - R[0, 1]) / (4 * qw)])
        q /= np.linalg.norm(q)
        x = np.concatenate([val[0:3], vel[0:3], q, np.zeros(3)])
        f = float(np.linalg.norm(fvec))
        Sinv = np.linalg.inv(allocation_matrix(self.p_c, c))
        u = Sinv @ np.array([f, 0.0, 0.0, 0.0])
        return x, u
