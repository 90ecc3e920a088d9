"""Run-directory artifact writers and readers.

Layout of a pipeline run directory:

    config.json          effective configuration, seed and target
    anchors.json         utopia/nadir vectors (absent for partial runs)
    verdict.json         posterior-filter outcome and per-stage costs
    summary.json         machine-readable run summary (no timing data)
    stages/<name>.json   per-stage optimizer record, including wall time
    trajectories/<name>.csv   sampled reference trajectories per stage
    waypoints/<name>.json     way-point tensors (enough to rebuild a plan)

Everything except stages/*.json is free of wall-clock information, so two
runs with the same configuration and seed under fixed-step integration
produce byte-identical trajectory CSVs and JSON summaries.
"""

import json
from pathlib import Path

import numpy as np

from .trajectory import WaypointPlan

_STAGE_ORDER = ("init", "pi", "theta", "e2log", "sis", "cop")


def _jsonify(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, dict):
        return {k: _jsonify(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonify(v) for v in obj]
    return obj


def write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(_jsonify(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_csv(path, header, rows):
    """Deterministic CSV: shortest round-trip float formatting."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for row in np.asarray(rows, dtype=float):
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return path


def read_csv(path):
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    return header, data


def trajectory_table(traj, rate):
    """t plus one (x, y, z, yaw) block per derivative order 0..n_jc-1."""
    orders = list(range(traj.n_jc))
    ts, blocks = traj.sample_grid(rate, orders)
    names = ["x", "y", "z", "yaw"][:traj.n_dim]
    header = ["t"]
    cols = [ts]
    for k in orders:
        suffix = "" if k == 0 else f"_d{k}"
        header += [n + suffix for n in names]
        cols.append(blocks[k])
    return header, np.column_stack(cols)


def waypoints_payload(plan: WaypointPlan):
    return {
        "times": plan.times,
        "boundary": plan.boundary,
        "free_orders": list(plan.free_orders),
    }


def plan_from_payload(payload):
    return WaypointPlan(np.asarray(payload["times"], dtype=float),
                        np.asarray(payload["boundary"], dtype=float),
                        tuple(payload["free_orders"]))


def write_pipeline_artifacts(result, ctx, out_dir):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", {
        "config": result.config,
        "seed": result.seed,
        "target": result.target,
    })
    if result.anchors is not None:
        write_json(out / "anchors.json", {
            "utopia": result.anchors.utopia,
            "nadir": result.anchors.nadir,
            "degenerate": result.anchors_degenerate,
        })
    rho = result.config["scalarization"]["rho"]
    write_json(out / "verdict.json", {
        "accepted": result.accepted,
        "anchors_degenerate": result.anchors_degenerate,
        "costs": {k: v for k, v in result.costs.items()},
        "utilities": result.utilities(rho),
    })
    write_json(out / "summary.json", {
        "target": result.target,
        "seed": result.seed,
        "stages": [s for s in _STAGE_ORDER if s in result.a],
        "costs": {k: v for k, v in result.costs.items()},
        "accepted": result.accepted,
        "anchors_degenerate": result.anchors_degenerate,
        "terminal_error": result.precondition.terminal_error,
        "rotor_violation": result.precondition.rotor_violation,
        "offset": result.precondition.offset,
        "failures": result.failures,
    })
    for name, run in result.runs.items():
        if run is not None:
            write_json(out / "stages" / f"{name}.json", run.to_dict())
    rate = result.config["integration"]["output_rate"]
    for name in _STAGE_ORDER:
        if name not in result.a:
            continue
        plan = result.plan.with_params(result.a[name])
        write_json(out / "waypoints" / f"{name}.json", waypoints_payload(plan))
        header, table = trajectory_table(plan.build(), rate)
        write_csv(out / "trajectories" / f"{name}.csv", header, table)
    return out


def load_run(run_dir):
    """Read back what a campaign or report needs from a run directory."""
    run_dir = Path(run_dir)
    summary = read_json(run_dir / "summary.json")
    plans = {}
    for name in summary["stages"]:
        payload = read_json(run_dir / "waypoints" / f"{name}.json")
        plans[name] = plan_from_payload(payload)
    return summary, plans


def write_campaign_artifacts(stats, out_dir, samples=None):
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "campaign_stats.json", stats.to_dict())
    if samples:
        for kind, values in samples.items():
            write_csv(out / f"samples_{kind}.csv", ["tracking_error"],
                      np.asarray(values, dtype=float).reshape(-1, 1))
    return out
