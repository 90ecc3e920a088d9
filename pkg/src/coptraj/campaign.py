"""Monte Carlo robustness campaigns, summary statistics, measurement export.

A campaign flies one reference trajectory many times against randomly
perturbed aerodynamic coefficients and collects the time-averaged position
error of each flight.  Perturbations default to uniform draws within the
given relative amplitude; a clipped-normal law is available.  Flights that
diverge are excluded from the statistics and counted.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .context import EvaluationContext
from .quadrotor import RotorParams
from .simulation import IntegratorOptions, simulate, tracking_error_norm

TRAJECTORY_TYPES = ("init", "sis", "e2log", "cop")


def perturbed_params(p_c: RotorParams, amplitude, rng, law="uniform"):
    """Coefficients drawn within +-amplitude (relative) of the nominal pair.

    The "normal" law draws with sigma = amplitude/2 and clips at the
    amplitude so both laws share the same support.
    """
    if law == "uniform":
        delta = rng.uniform(-amplitude, amplitude, 2)
    elif law == "normal":
        delta = np.clip(rng.normal(0.0, amplitude / 2.0, 2),
                        -amplitude, amplitude)
    else:
        raise ValueError(f"unknown perturbation law {law!r}")
    return RotorParams(p_c.k_f * (1.0 + delta[0]), p_c.k_m * (1.0 + delta[1]))


@dataclass
class TrackingSamples:
    errors: np.ndarray
    diverged: int
    saturated: int

    @property
    def n(self):
        return len(self.errors)


def _fly_once(plan, a, p_real, ctx: EvaluationContext):
    traj = plan.with_params(a).build()
    tr = simulate(ctx.initial_state(), np.zeros(3), traj, p_real, ctx.p_c,
                  ctx.constants, ctx.gains, ctx.duration, ctx.sim_opts)
    if tr.diverged:
        return None, tr.saturation_count > 0
    return tracking_error_norm(tr, traj), tr.saturation_count > 0


def _flight_task(payload):
    plan, a, p_real, ctx = payload
    return _fly_once(plan, a, p_real, ctx)


def perturbation_draws(p_c, amplitude, n_flights, seed_seq, law="uniform"):
    """One coefficient draw per flight, each from its own child stream."""
    if isinstance(seed_seq, (int, np.integer)):
        seed_seq = np.random.SeedSequence(seed_seq)
    return [perturbed_params(p_c, amplitude, np.random.default_rng(c), law)
            for c in seed_seq.spawn(n_flights)]


def fly_draws(plan, a, draws, ctx: EvaluationContext, workers=1):
    """Tracking-error samples for an explicit perturbation sequence."""
    payloads = [(plan, a, p, ctx) for p in draws]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(_flight_task, payloads))
    else:
        outcomes = [_flight_task(p) for p in payloads]
    errors = [e for e, _ in outcomes if e is not None]
    diverged = sum(1 for e, _ in outcomes if e is None)
    saturated = sum(1 for _, s in outcomes if s)
    return TrackingSamples(np.array(errors), diverged, saturated)


def monte_carlo_tracking(plan, a, amplitude, n_flights, seed_seq,
                         ctx: EvaluationContext, law="uniform", workers=1):
    """Tracking-error samples over seeded coefficient perturbations.

    Each flight gets an independent child stream of seed_seq, so the sample
    set is invariant to execution order and worker count.
    """
    draws = perturbation_draws(ctx.p_c, amplitude, n_flights, seed_seq, law)
    return fly_draws(plan, a, draws, ctx, workers)


def summarize(samples):
    """Order-independent five-number-plus-mean summary."""
    x = np.sort(np.asarray(samples, dtype=float))
    if x.size == 0:
        return {"n": 0}
    q1, med, q3 = np.percentile(x, [25, 50, 75])
    return {
        "n": int(x.size),
        "min": float(x[0]),
        "q1": float(q1),
        "median": float(med),
        "q3": float(q3),
        "max": float(x[-1]),
        "mean": float(np.mean(x)),
    }


@dataclass
class CampaignStats:
    amplitude: float
    flights: int
    law: str
    tracking: dict = field(default_factory=dict)   # type -> summary
    lambda_min: dict = field(default_factory=dict)  # type -> float
    diverged: dict = field(default_factory=dict)
    saturated: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "amplitude": self.amplitude,
            "flights": self.flights,
            "law": self.law,
            "tracking": self.tracking,
            "lambda_min": self.lambda_min,
            "diverged": self.diverged,
            "saturated": self.saturated,
            "verdicts": self.verdicts,
        }


def campaign_compare(pipeline, ctx: EvaluationContext, amplitude, flights,
                     seed, law="uniform", workers=1, tolerance=0.01):
    """Fly every optimized trajectory type and order their median errors.

    Verdicts compare medians with a relative tolerance: the combined
    sensitivity stage should not trail the balanced stage, which should not
    trail the purely observability-driven one.  The observability column is
    read off the stored stage costs (lambda_min = -F_e2log).
    """
    missing = [t for t in TRAJECTORY_TYPES if t not in pipeline.a]
    if missing:
        raise ValueError(f"pipeline result lacks trajectories: {missing}")
    # common random numbers: every trajectory type flies the same draws,
    # so the comparison is paired flight by flight
    draws = perturbation_draws(ctx.p_c, amplitude, flights, seed, law)
    stats = CampaignStats(amplitude, flights, law)
    for kind in TRAJECTORY_TYPES:
        samples = fly_draws(pipeline.plan, pipeline.a[kind], draws, ctx,
                            workers)
        stats.tracking[kind] = summarize(samples.errors)
        stats.diverged[kind] = samples.diverged
        stats.saturated[kind] = samples.saturated
        stats.lambda_min[kind] = float(-pipeline.costs[kind][2])
    med = {k: stats.tracking[k].get("median", float("nan"))
           for k in TRAJECTORY_TYPES}
    stats.verdicts = {
        "sis_le_cop": bool(med["sis"] <= med["cop"] * (1.0 + tolerance)),
        "cop_le_e2log": bool(med["cop"] <= med["e2log"] * (1.0 + tolerance)),
        "medians": med,
    }
    return stats


# ---------------------------------------------------------------------------
# measurement export
# ---------------------------------------------------------------------------

MEASUREMENT_GROUPS = ("rotor", "position", "quaternion", "gyro")


def measurement_table(plan, a, ctx: EvaluationContext, rate, noise=None,
                      seed=0):
    """Time-stamped sensor/input table for an external estimator.

    Columns: t, rotor speeds (4), position (3), quaternion (4), body rates
    (3).  noise maps group name to an additive Gaussian standard deviation;
    absent groups stay exact.  The nominal closed loop is re-simulated on
    the requested output rate.
    """
    noise = dict(noise or {})
    unknown = set(noise) - set(MEASUREMENT_GROUPS)
    if unknown:
        raise ValueError(f"unknown measurement groups: {sorted(unknown)}")
    opts = IntegratorOptions(ctx.sim_opts.method, ctx.sim_opts.fixed_step,
                             ctx.sim_opts.rel_tol, ctx.sim_opts.abs_tol,
                             output_rate=rate)
    traj = plan.with_params(a).build()
    tr = simulate(ctx.initial_state(), np.zeros(3), traj, ctx.p_c, ctx.p_c,
                  ctx.constants, ctx.gains, ctx.duration, opts, strict=True)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    rotor = np.sqrt(np.maximum(tr.inputs, 0.0))
    pos = tr.states[:, 0:3].copy()
    quat = tr.states[:, 6:10].copy()
    gyro = tr.states[:, 10:13].copy()
    blocks = {"rotor": rotor, "position": pos, "quaternion": quat,
              "gyro": gyro}
    for name in MEASUREMENT_GROUPS:      # fixed order keeps draws reproducible
        if name in noise and noise[name] > 0.0:
            blocks[name] = blocks[name] + rng.normal(
                0.0, noise[name], blocks[name].shape)
    table = np.column_stack([tr.times, blocks["rotor"], blocks["position"],
                             blocks["quaternion"], blocks["gyro"]])
    header = (["t"] + [f"rotor_speed_{i}" for i in range(1, 5)]
              + ["pos_x", "pos_y", "pos_z"]
              + ["quat_w", "quat_x", "quat_y", "quat_z"]
              + ["gyro_x", "gyro_y", "gyro_z"])
    return header, table
