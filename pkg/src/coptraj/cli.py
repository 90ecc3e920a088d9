"""Command-line front door.

Subcommands: precondition, optimize, evaluate, export, report.  Exit codes:
0 on success, 1 on usage errors, 2 on runtime failures.  Every command takes
--json to emit a machine-readable summary on stdout.
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import artifacts
from .campaign import campaign_compare, measurement_table
from .config import (build_context, config_from_dict, config_to_dict,
                     default_config, load_config)
from .optimization import precondition, run_pipeline


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser():
    p = _Parser(prog="coptraj",
                description="Control- and observability-aware quadrotor "
                            "trajectory planning toolkit")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp, out_required=False):
        sp.add_argument("--config", help="INI config file (defaults built in)")
        sp.add_argument("--seed", type=int, default=0, help="master seed")
        sp.add_argument("--out", required=out_required, help="output directory")
        sp.add_argument("--json", action="store_true",
                        help="print a JSON summary to stdout")

    sp = sub.add_parser("precondition",
                        help="generate a feasible, target-reaching plan")
    common(sp)
    sp.add_argument("--target", help="comma list x,y,z[,yaw] (else drawn "
                                     "from the configured target box)")

    sp = sub.add_parser("optimize", help="run trajectory optimization stages")
    common(sp)
    sp.add_argument("--objective", required=True,
                    choices=["pi", "theta", "e2log", "sis", "cop", "pipeline"])
    sp.add_argument("--target", help="comma list x,y,z[,yaw]")

    sp = sub.add_parser("evaluate",
                        help="Monte Carlo robustness campaign over a run")
    common(sp)
    sp.add_argument("--run", required=True, help="pipeline run directory")
    sp.add_argument("--amplitude", type=float, help="relative perturbation")
    sp.add_argument("--flights", type=int, help="flights per trajectory")
    sp.add_argument("--workers", type=int, help="parallel flight workers")

    sp = sub.add_parser("export",
                        help="write sensor/input measurement traces")
    common(sp)
    sp.add_argument("--run", required=True, help="pipeline run directory")
    sp.add_argument("--stage", default="cop",
                    choices=["init", "pi", "theta", "e2log", "sis", "cop"])
    sp.add_argument("--rate", type=float, default=100.0, help="sample rate Hz")
    for group in ("rotor", "position", "quaternion", "gyro"):
        sp.add_argument(f"--noise-{group}", type=float, default=0.0,
                        help=f"Gaussian std added to the {group} channels")

    sp = sub.add_parser("report", help="summarize a run directory (read-only)")
    common(sp)
    sp.add_argument("--run", required=True, help="run directory")
    return p


def _load_cfg(args):
    return load_config(args.config) if args.config else default_config()


def _parse_target(text):
    if text is None:
        return None
    vals = [float(v) for v in text.split(",")]
    if len(vals) not in (3, 4):
        raise UsageError("--target needs x,y,z or x,y,z,yaw")
    return np.array(vals)


def _emit(args, payload, lines):
    if args.json:
        print(json.dumps(artifacts._jsonify(payload), sort_keys=True))
    else:
        for line in lines:
            print(line)


def _cmd_precondition(args):
    cfg = _load_cfg(args)
    target = _parse_target(args.target)
    ss = np.random.SeedSequence(args.seed)
    kids = ss.spawn(3)
    if target is None:
        from .config import draw_target
        target = draw_target(cfg, np.random.default_rng(kids[0]))
    pre, ctx = precondition(cfg, target, kids[1])
    payload = {
        "target": target,
        "offset": pre.offset,
        "terminal_error": pre.terminal_error,
        "rotor_violation": pre.rotor_violation,
        "simulations": pre.sims,
    }
    if args.out:
        out = Path(args.out)
        artifacts.write_json(out / "config.json", {
            "config": config_to_dict(cfg), "seed": args.seed,
            "target": target})
        artifacts.write_json(out / "precondition.json", payload)
        plan = pre.plan.with_params(pre.a_init)
        artifacts.write_json(out / "waypoints" / "init.json",
                             artifacts.waypoints_payload(plan))
        header, table = artifacts.trajectory_table(
            plan.build(), cfg.integration.output_rate)
        artifacts.write_csv(out / "trajectories" / "init.csv", header, table)
    _emit(args, payload, [
        f"target: {np.round(target, 4).tolist()}",
        f"terminal error: {pre.terminal_error:.2e} m "
        f"(tolerance {cfg.precondition.terminal_tol})",
        f"rotor-bound violation: {pre.rotor_violation:.3e}",
        f"way-point offset: {np.round(pre.offset, 4).tolist()}",
    ])
    return 0


def _cmd_optimize(args):
    cfg = _load_cfg(args)
    target = _parse_target(args.target)
    result = run_pipeline(cfg, args.seed, target=target, out_dir=args.out,
                          objective=args.objective)
    costs = {k: v.tolist() for k, v in result.costs.items()}
    payload = {
        "target": result.target,
        "objective": args.objective,
        "costs": costs,
        "accepted": result.accepted,
        "anchors_degenerate": result.anchors_degenerate,
        "wall_time": result.wall_time,
    }
    lines = [f"target: {np.round(result.target, 4).tolist()}"]
    for name, F in result.costs.items():
        lines.append(f"{name:>6}: F_pi={F[0]:.4g} F_theta={F[1]:.4g} "
                     f"F_e2log={F[2]:.4g}")
    if args.objective in ("cop", "pipeline"):
        lines.append(f"posterior filter: "
                     f"{'accepted' if result.accepted else 'rejected'}")
    _emit(args, payload, lines)
    return 0


class _RunShim:
    """Adapter so campaigns can run straight off a run directory."""

    def __init__(self, run_dir):
        self.summary, plans = artifacts.load_run(run_dir)
        self.plan = plans["init"]
        self.a = {name: plan.pack() for name, plan in plans.items()}
        self.costs = {k: np.asarray(v) for k, v in self.summary["costs"].items()}


def _cmd_evaluate(args):
    run_dir = Path(args.run)
    shim = _RunShim(run_dir)
    stored = artifacts.read_json(run_dir / "config.json")
    cfg = config_from_dict(stored["config"])
    ctx = build_context(cfg, shim.plan)
    amplitude = args.amplitude if args.amplitude is not None \
        else cfg.campaign.amplitude
    flights = args.flights if args.flights is not None else cfg.campaign.flights
    workers = args.workers if args.workers is not None else cfg.campaign.workers
    stats = campaign_compare(shim, ctx, amplitude, flights, args.seed,
                             law=cfg.campaign.perturbation, workers=workers)
    out = Path(args.out) if args.out else run_dir / "campaign"
    artifacts.write_campaign_artifacts(stats, out)
    lines = [f"amplitude ±{100 * amplitude:g}%  flights/trajectory: {flights}"]
    for kind, summary in stats.tracking.items():
        med = summary.get("median", float("nan"))
        lines.append(f"{kind:>6}: median tracking error {med:.4g} m "
                     f"(n={summary.get('n', 0)}, "
                     f"diverged={stats.diverged[kind]})")
    lines.append(f"verdicts: {stats.verdicts}")
    _emit(args, stats.to_dict(), lines)
    return 0


def _cmd_export(args):
    run_dir = Path(args.run)
    shim = _RunShim(run_dir)
    stored = artifacts.read_json(run_dir / "config.json")
    cfg = config_from_dict(stored["config"])
    ctx = build_context(cfg, shim.plan)
    if args.stage not in shim.a:
        raise ValueError(f"run has no stage {args.stage!r}")
    noise = {g: getattr(args, f"noise_{g}")
             for g in ("rotor", "position", "quaternion", "gyro")}
    header, table = measurement_table(shim.plan, shim.a[args.stage], ctx,
                                      args.rate, noise, args.seed)
    out = Path(args.out) if args.out \
        else run_dir / f"measurements_{args.stage}.csv"
    if out.is_dir():
        out = out / f"measurements_{args.stage}.csv"
    artifacts.write_csv(out, header, table)
    _emit(args, {"file": str(out), "rows": int(table.shape[0]),
                 "columns": header},
          [f"wrote {table.shape[0]} samples to {out}"])
    return 0


def _cmd_report(args):
    run_dir = Path(args.run)
    summary = artifacts.read_json(run_dir / "summary.json")
    payload = {"summary": summary}
    lines = [f"run: {run_dir}",
             f"target: {summary['target']}",
             f"stages: {', '.join(summary['stages'])}",
             f"accepted: {summary['accepted']}"]
    for name, F in summary["costs"].items():
        lines.append(f"{name:>6}: F_pi={F[0]:.4g} F_theta={F[1]:.4g} "
                     f"F_e2log={F[2]:.4g}")
    verdict_path = run_dir / "verdict.json"
    if verdict_path.exists():
        payload["verdict"] = artifacts.read_json(verdict_path)
    campaign_path = run_dir / "campaign" / "campaign_stats.json"
    if campaign_path.exists():
        payload["campaign"] = artifacts.read_json(campaign_path)
        lines.append(f"campaign verdicts: {payload['campaign']['verdicts']}")
    _emit(args, payload, lines)
    return 0


_COMMANDS = {
    "precondition": _cmd_precondition,
    "optimize": _cmd_optimize,
    "evaluate": _cmd_evaluate,
    "export": _cmd_export,
    "report": _cmd_report,
}


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except SystemExit as exc:      # --help
        return int(exc.code or 0)
    if args.command is None:
        parser.print_help()
        return 0
    try:
        return _COMMANDS[args.command](args)
    except UsageError as err:
        print(f"usage error: {err}", file=sys.stderr)
        return 1
    except Exception as err:       # runtime failure -> exit 2 with diagnostic
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
