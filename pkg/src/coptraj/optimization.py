"""Derivative-free constrained minimization and the multi-step planning flow.

The pipeline: precondition a random way-point plan (rotor-bound feasibility,
then a terminal offset so the nominal closed loop lands on the true target),
minimize each objective individually to obtain utopia/nadir anchors, run the
combined sensitivity stage (weights 1/2, 1/2, 0) and the fully balanced stage
(weights 1/3 each), and finally accept the balanced result only if it strictly
improves both the combined-sensitivity utility and the observability cost of
the preconditioned baseline.

The solver contract is behavioral (linear-model trust-region descent under
inequality constraints); it is backed by scipy's COBYLA, with a penalized
Nelder-Mead fallback that must lead to the same pipeline decisions.
"""

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.optimize import minimize as _scipy_minimize

from .config import (ToolkitConfig, build_context, build_plan, config_to_dict,
                     draw_target, free_orders, start_point, workspace_bounds)
from .context import EvaluationContext
from .observability import cost_e2log
from .scalarization import (DegenerateAnchors, ParetoAnchors, compute_anchors,
                            tchebycheff)
from .sensitivity import cost_pi, cost_theta, input_cost_from_trace, state_cost_from_trace
from .simulation import simulate
from .trajectory import WaypointPlan

OBJECTIVES = ("pi", "theta", "e2log")


class InfeasibleStart(RuntimeError):
    pass


@dataclass(frozen=True)
class FeasibleSet:
    """Box bounds per decision variable plus a constraint tolerance."""
    lower: np.ndarray
    upper: np.ndarray
    constraint_tol: float = 1e-6

    def __post_init__(self):
        object.__setattr__(self, "lower", np.asarray(self.lower, dtype=float))
        object.__setattr__(self, "upper", np.asarray(self.upper, dtype=float))
        if self.lower.shape != self.upper.shape:
            raise ValueError("bound shape mismatch")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    @property
    def size(self):
        return self.lower.size

    def clip(self, a):
        return np.minimum(np.maximum(np.asarray(a, dtype=float), self.lower),
                          self.upper)

    def contains(self, a):
        a = np.asarray(a, dtype=float)
        return bool(np.all(a >= self.lower) and np.all(a <= self.upper))


def feasible_set_for_plan(plan: WaypointPlan, cfg: ToolkitConfig):
    """Workspace box per free way-point value; rate/accel bounds for
    higher-order conditions when those are freed."""
    ws = workspace_bounds(cfg)
    lo, hi = [], []
    for _ in range(1, plan.boundary.shape[0] - 1):
        for k in plan.free_orders:
            if k == 0:
                lo.extend(ws[:, 0])
                hi.extend(ws[:, 1])
            else:
                bound = cfg.workspace.rate_bound if k == 1 else cfg.workspace.accel_bound
                lo.extend([-bound] * plan.n_dim)
                hi.extend([bound] * plan.n_dim)
    return FeasibleSet(np.array(lo), np.array(hi), cfg.optimizer.constraint_tol)


@dataclass
class OptRun:
    """Outcome of one derivative-free minimization."""
    a_best: np.ndarray
    f_best: float
    history: list                 # objective value per evaluation
    best_history: list            # running best feasible value
    feasible: list                # per-evaluation feasibility flags
    n_evals: int
    termination: str
    wall_time: float

    def to_dict(self):
        return {
            "a_best": self.a_best.tolist(),
            "f_best": self.f_best,
            "history": self.history,
            "best_history": self.best_history,
            "feasible": self.feasible,
            "n_evals": self.n_evals,
            "termination": self.termination,
            "wall_time": self.wall_time,
        }


def minimize(objective, a0, feasible: FeasibleSet, constraints=(), budget=150,
             rhobeg=0.3, tol=1e-6, method="cobyla", target_value=None):
    """Best-feasible minimization of a black-box objective over a box.

    Candidate points are clipped into the box before evaluation, so every
    recorded iterate satisfies the bounds exactly; feasibility additionally
    requires every constraint callable to be >= -constraint_tol.  Stops on
    the evaluation budget, on trust-region collapse, or as soon as the
    objective reaches target_value (when given).  Returns the best feasible
    iterate seen (a0 itself when nothing better appeared).
    """
    a0 = feasible.clip(np.asarray(a0, dtype=float))
    ctol = feasible.constraint_tol
    state = {
        "n": 0, "best_a": None, "best_f": np.inf,
        "history": [], "best_history": [], "feas": [], "stop": None,
    }
    t0 = time.perf_counter()

    # once the budget or the target is hit, further solver callbacks become
    # no-ops (constant objective, feasible constraints) so the backend winds
    # down without evaluating anything expensive
    def evaluate(a_raw):
        if state["stop"] is not None:
            return state["history"][-1]
        a = feasible.clip(a_raw)
        f = float(objective(a))
        ok = all(float(g(a)) >= -ctol for g in constraints)
        state["n"] += 1
        state["history"].append(f)
        state["feas"].append(ok)
        if ok and f < state["best_f"]:
            state["best_f"] = f
            state["best_a"] = a.copy()
        state["best_history"].append(state["best_f"])
        if target_value is not None and ok and f <= target_value:
            state["stop"] = "target"
        elif state["n"] >= budget:
            state["stop"] = "budget"
        return f

    def guard(g):
        return lambda a: 1.0 if state["stop"] is not None \
            else float(g(feasible.clip(a)))

    # the starting point always counts as one evaluation
    evaluate(a0)
    if state["stop"] is not None or feasible.size == 0:
        termination = state["stop"] or "stagnation"
    elif method == "cobyla":
        termination = _run_cobyla(evaluate, a0, feasible,
                                  [guard(g) for g in constraints],
                                  budget, rhobeg, tol, ctol)
    elif method == "neldermead":
        termination = _run_neldermead(evaluate, a0, feasible,
                                      [guard(g) for g in constraints],
                                      budget, tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    termination = state["stop"] or termination

    if state["best_a"] is None:
        raise InfeasibleStart("no feasible iterate found")
    return OptRun(state["best_a"], state["best_f"], state["history"],
                  state["best_history"], state["feas"], state["n"],
                  termination, time.perf_counter() - t0)


def _run_cobyla(evaluate, a0, feasible, constraints, budget, rhobeg, tol, ctol):
    cons = [{"type": "ineq", "fun": g} for g in constraints]
    cons.append({"type": "ineq", "fun": lambda a: a - feasible.lower})
    cons.append({"type": "ineq", "fun": lambda a: feasible.upper - a})
    res = _scipy_minimize(evaluate, a0, method="COBYLA", constraints=cons,
                          options={"maxiter": int(budget * 2), "rhobeg": rhobeg,
                                   "tol": tol, "catol": ctol})
    return "stagnation" if res.status == 1 else "solver"


def _run_neldermead(evaluate, a0, feasible, constraints, budget, tol):
    span = feasible.upper - feasible.lower
    scale = float(np.max(span)) if span.size else 1.0
    scale = max(scale, 1e-9)

    def penalized(a):
        f = evaluate(a)   # evaluate() clips, so f is the boxed objective
        pen = 0.0
        for g in constraints:
            v = float(g(feasible.clip(a)))
            if v < 0.0:
                pen += (v / scale) ** 2
        box = (np.asarray(a, dtype=float) - feasible.clip(a)) / scale
        return f + 1e6 * (pen + float(np.dot(box, box)))

    res = _scipy_minimize(penalized, a0, method="Nelder-Mead",
                          options={"maxfev": int(budget * 2), "xatol": tol,
                                   "fatol": tol})
    return "stagnation" if res.success else "solver"


# ---------------------------------------------------------------------------
# preconditioning
# ---------------------------------------------------------------------------

@dataclass
class PreconditionResult:
    plan: WaypointPlan            # template with the offset tail baked in
    a_init: np.ndarray
    offset: np.ndarray
    terminal_error: float
    rotor_violation: float
    phase1: Optional[OptRun]
    sims: int


def _terminal_error(plan, a, target_pos, ctx: EvaluationContext):
    traj = plan.with_params(a).build()
    tr = simulate(ctx.initial_state(), np.zeros(3), traj, ctx.p_c, ctx.p_c,
                  ctx.constants, ctx.gains, ctx.duration, ctx.sim_opts)
    if tr.diverged:
        return None, tr
    return tr.positions()[-1] - target_pos, tr


def precondition(cfg: ToolkitConfig, target, seed_seq, ctx=None):
    """Random feasible plan whose nominal closed loop lands on the target.

    Phase 1 drives the aggregated rotor-bound violation of randomly drawn
    interior way-points to zero; phase 2 offsets the final way-point with a
    damped fixed-point iteration on the simulated terminal error (a short
    derivative-free polish takes over if that stalls).
    """
    target = np.asarray(target, dtype=float)
    if target.shape == (3,):
        target = np.concatenate([target, [cfg.trajectory.target_yaw]])
    plan = build_plan(cfg, target)
    ctx = ctx or build_context(cfg, plan)
    fset = feasible_set_for_plan(plan, cfg)
    rng = np.random.default_rng(seed_seq)
    a = rng.uniform(fset.lower, fset.upper) if fset.size else np.empty(0)
    sims = 0
    pre = cfg.precondition

    # phase 1: rotor-bound feasibility
    phase1 = None
    violation = ctx.rotor_violation(a)
    sims += 1
    if violation > 0.0:
        phase1 = minimize(ctx.rotor_violation, a, fset,
                          budget=pre.phase1_budget,
                          rhobeg=cfg.optimizer.rhobeg, tol=cfg.optimizer.tol,
                          method=cfg.optimizer.method, target_value=0.0)
        a = phase1.a_best
        violation = phase1.f_best
        sims += phase1.n_evals
        if violation > 0.0:
            raise InfeasibleStart(
                f"rotor bounds violated by {violation:.3g} after phase 1")

    # phase 2: terminal offset
    target_pos = target[0:3]
    offset = np.zeros(3)
    err_norm = np.inf
    for _ in range(pre.fixed_point_iters):
        err, tr = _terminal_error(plan.with_tail_offset(offset), a,
                                  target_pos, ctx)
        sims += 1
        if err is None:
            raise InfeasibleStart("nominal simulation diverged while "
                                  "preconditioning")
        err_norm = float(np.linalg.norm(err))
        if err_norm < pre.terminal_tol:
            break
        offset -= err
    if err_norm >= pre.terminal_tol and pre.phase2_budget > 0:
        def objective(d):
            e, _ = _terminal_error(plan.with_tail_offset(d), a, target_pos, ctx)
            return 1e6 if e is None else float(np.linalg.norm(e))
        polish = minimize(objective, offset,
                          FeasibleSet(offset - 1.0, offset + 1.0),
                          budget=pre.phase2_budget, rhobeg=0.05,
                          tol=1e-8, method=cfg.optimizer.method,
                          target_value=0.5 * pre.terminal_tol)
        offset = polish.a_best
        err_norm = polish.f_best
        sims += polish.n_evals

    final_plan = plan.with_tail_offset(offset)
    final_ctx = build_context(cfg, final_plan)
    violation = final_ctx.rotor_violation(a)
    sims += 1
    return PreconditionResult(final_plan, a, offset, err_norm, violation,
                              phase1, sims), final_ctx


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

def objective_functions(ctx: EvaluationContext):
    return {
        "pi": lambda a: cost_pi(a, ctx),
        "theta": lambda a: cost_theta(a, ctx),
        "e2log": lambda a: cost_e2log(a, ctx),
    }


def evaluate_costs(a, ctx: EvaluationContext):
    """All three objective values at one decision vector (shared runs)."""
    tr = ctx.propagation(a)
    if tr.diverged:
        return np.array([ctx.penalty] * 3)
    f_pi = state_cost_from_trace(tr, ctx.rows, ctx.norm)
    f_th = input_cost_from_trace(tr, ctx.norm)
    return np.array([f_pi, f_th, cost_e2log(a, ctx)])


def _scalarized_utility(costs, anchors: ParetoAnchors, weights, rho):
    """Tchebycheff utility evaluated in normalized objective space.

    Raw objective magnitudes here differ by many orders (the input
    sensitivity dwarfs the Gramian eigenvalue), which would let the
    augmentation term override the normalized max term entirely.  The
    stage utilities therefore feed the scalarizer per-span normalized
    distances (unit anchors), keeping the max term identical and the
    augmentation bounded as intended.
    """
    F = np.asarray(costs, dtype=float)
    if np.any(F >= 1e9) or np.any(~np.isfinite(F)):
        return float("inf")
    k = F.size
    G = np.abs(F - anchors.utopia) / anchors.spans
    unit = ParetoAnchors(np.zeros(k), np.ones(k))
    return tchebycheff(G, unit, weights, rho)


def sis_utility(costs2, anchors2: ParetoAnchors, rho):
    return _scalarized_utility(costs2, anchors2, (0.5, 0.5), rho)


def cop_utility(costs3, anchors3: ParetoAnchors, rho):
    return _scalarized_utility(costs3, anchors3, (1/3, 1/3, 1/3), rho)


def posterior_accept(sis_cop, sis_init, e2_cop, e2_init):
    """Strict-improvement filter on the balanced stage output."""
    return bool(sis_cop < sis_init and e2_cop < e2_init)


def posterior_filter(a_cop, a_init, ctx, anchors: ParetoAnchors, rho):
    F_cop = evaluate_costs(a_cop, ctx)
    F_init = evaluate_costs(a_init, ctx)
    a2 = anchors.subset([0, 1])
    return posterior_accept(sis_utility(F_cop[:2], a2, rho),
                            sis_utility(F_init[:2], a2, rho),
                            F_cop[2], F_init[2])


@dataclass
class PipelineResult:
    target: np.ndarray
    seed: int
    plan: WaypointPlan
    a: dict                        # stage name -> decision vector
    runs: dict                     # stage name -> OptRun (or None)
    costs: dict                    # stage name -> (F_pi, F_theta, F_e2log)
    anchors: Optional[ParetoAnchors]
    anchors_degenerate: bool
    accepted: bool
    precondition: PreconditionResult
    config: dict
    failures: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def utilities(self, rho):
        """SIS (and, for full runs, COP) scalarized utilities per stage."""
        if self.anchors is None or self.anchors_degenerate:
            return {}
        full = self.anchors.utopia.size == 3
        a2 = self.anchors.subset([0, 1])
        out = {}
        for name, F in self.costs.items():
            entry = {"sis": sis_utility(np.asarray(F)[:2], a2, rho)}
            if full:
                entry["cop"] = cop_utility(np.asarray(F), self.anchors, rho)
            out[name] = entry
        return out


_STAGE_SETS = {
    "pi": ("pi",),
    "theta": ("theta",),
    "e2log": ("e2log",),
    "sis": ("pi", "theta", "sis"),
    "cop": ("pi", "theta", "e2log", "sis", "cop"),
    "pipeline": ("pi", "theta", "e2log", "sis", "cop"),
}


def run_pipeline(cfg: ToolkitConfig, seed, target=None, out_dir=None,
                 objective="pipeline"):
    """Execute the multi-step optimization for one target.

    objective selects how far to go: a single individual stage, the combined
    sensitivity stage (which only needs the two sensitivity anchors), or the
    whole flow ("cop"/"pipeline") ending in the posterior filter.  Stage
    budgets, weights and rho come from the config; every stage starts from
    the preconditioned decision vector.  Artifacts are written to out_dir
    when given (see the artifacts module for the layout).
    """
    if objective not in _STAGE_SETS:
        raise ValueError(f"unknown objective {objective!r}")
    wanted = _STAGE_SETS[objective]
    t_start = time.perf_counter()
    ss = np.random.SeedSequence(seed)
    kids = ss.spawn(3)
    if target is None:
        target = draw_target(cfg, np.random.default_rng(kids[0]))
    pre, ctx = precondition(cfg, target, kids[1])
    a_init = pre.a_init
    fset = feasible_set_for_plan(pre.plan, cfg)
    rho = cfg.scalarization.rho
    opt = cfg.optimizer
    budget = opt.evals_per_stage

    def rotor_ok(a):
        return -ctx.rotor_violation(a)

    def stage(objective_fn):
        return minimize(objective_fn, a_init, fset, constraints=(rotor_ok,),
                        budget=budget, rhobeg=opt.rhobeg, tol=opt.tol,
                        method=opt.method)

    objs = objective_functions(ctx)
    a = {"init": a_init}
    runs = {}
    costs = {"init": evaluate_costs(a_init, ctx)}

    individual = [n for n in OBJECTIVES if n in wanted]
    for name in individual:
        if budget > 0:
            runs[name] = stage(objs[name])
            a[name] = runs[name].a_best
        else:
            runs[name] = None
            a[name] = a_init.copy()
        costs[name] = evaluate_costs(a[name], ctx)

    anchors = None
    anchors_degenerate = False
    accepted = False
    if "sis" in wanted or "cop" in wanted:
        # anchor matrix: row j = objective values at minimizer j
        cols = [OBJECTIVES.index(n) for n in individual]
        matrix = np.vstack([np.asarray(costs[n])[cols] for n in individual])
        try:
            anchors = compute_anchors(matrix)
        except DegenerateAnchors:
            anchors = ParetoAnchors(np.diag(matrix), matrix.max(axis=0))
            anchors_degenerate = True

        def run_scalarized(name, utility):
            if budget > 0 and not anchors_degenerate:
                runs[name] = stage(utility)
                a[name] = runs[name].a_best
            else:
                runs[name] = None
                a[name] = a_init.copy()
            costs[name] = evaluate_costs(a[name], ctx)

        a2 = anchors.subset([0, 1])
        if "sis" in wanted:
            run_scalarized(
                "sis", lambda v: sis_utility(evaluate_costs(v, ctx)[:2], a2, rho))
        if "cop" in wanted:
            run_scalarized(
                "cop", lambda v: cop_utility(evaluate_costs(v, ctx), anchors, rho))
            if not anchors_degenerate:
                accepted = posterior_accept(
                    sis_utility(costs["cop"][:2], a2, rho),
                    sis_utility(costs["init"][:2], a2, rho),
                    costs["cop"][2], costs["init"][2])

    result = PipelineResult(
        target=np.asarray(target, dtype=float), seed=int(seed), plan=pre.plan,
        a=a, runs=runs, costs={k: np.asarray(v) for k, v in costs.items()},
        anchors=anchors, anchors_degenerate=anchors_degenerate,
        accepted=accepted, precondition=pre, config=config_to_dict(cfg),
        failures=dict(ctx.failures), wall_time=time.perf_counter() - t_start)

    if out_dir is not None:
        from .artifacts import write_pipeline_artifacts
        write_pipeline_artifacts(result, ctx, out_dir)
    return result
