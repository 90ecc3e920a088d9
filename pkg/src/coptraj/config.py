"""Toolkit configuration: defaults, INI file loading, object factories.

The on-disk format is a flat key/value text file with sections (configparser
syntax).  Every field has a default and every effective value is echoed into
the run artifacts, so a run directory always records the exact configuration
it was produced with.

Randomness note: every run consumes a single master seed.  It feeds a
numpy SeedSequence whose spawned children are used, in order, for (0) the
target draw, (1) the preconditioning way-point initialization and (2) the
Monte Carlo campaign streams; there are no other entropy sources.
"""

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .context import EvaluationContext
from .controller import ControllerGains
from .observability import MeasurementModel, ObservabilityConfig
from .quadrotor import QuadrotorConstants, RotorParams
from .simulation import IntegratorOptions
from .trajectory import WaypointPlan, uniform_plan


@dataclass
class PhysicalSection:
    mass: float = 0.68
    inertia_xx: float = 7e-3
    inertia_yy: float = 7e-3
    inertia_zz: float = 12e-3
    arm_length: float = 0.17
    gravity: float = 9.81
    k_f: float = 3.375e-4
    k_m: float = 0.016
    u_min: float = 0.0
    u_max: float = 2.0e4


@dataclass
class GainsSection:
    k_r: float = 6.0
    k_v: float = 4.0
    k_i: float = 0.05
    k_q: float = 3.0
    k_w: float = 0.35
    xi_limit: float = 5.0


@dataclass
class TrajectorySection:
    duration: float = 20.0
    n_pieces: int = 5
    n_jc: int = 3
    free_orders: str = "0"
    start: str = "0,0,0,0"
    target_yaw: float = 0.0


@dataclass
class WorkspaceSection:
    x_min: float = -1.0
    x_max: float = 6.0
    y_min: float = -1.0
    y_max: float = 6.0
    z_min: float = -1.0
    z_max: float = 2.0
    yaw_min: float = -3.14159265
    yaw_max: float = 3.14159265
    rate_bound: float = 10.0
    accel_bound: float = 20.0


@dataclass
class TargetsSection:
    x_min: float = 2.0
    x_max: float = 5.0
    y_min: float = 2.0
    y_max: float = 5.0
    z_min: float = -0.5
    z_max: float = 1.0


@dataclass
class IntegrationSection:
    method: str = "rk4"
    fixed_step: float = 1e-3
    rel_tol: float = 1e-8
    abs_tol: float = 1e-8
    output_rate: float = 100.0


@dataclass
class SensitivitySection:
    rows: str = "position"
    norm: str = "fro"
    step: float = 0.0          # 0 -> reuse integration.fixed_step


@dataclass
class ObservabilitySection:
    taylor_order: int = 2
    segments: int = 40
    quad_nodes: int = 5
    channels: str = "position,quaternion,gyro"
    rotor_speed_inputs: bool = True
    scaling_file: str = ""
    anchor: str = "closed_loop"


@dataclass
class ScalarizationSection:
    rho: float = 1e-4


@dataclass
class OptimizerSection:
    method: str = "cobyla"
    evals_per_stage: int = 150
    rhobeg: float = 0.3
    tol: float = 1e-6
    constraint_tol: float = 1e-6


@dataclass
class PreconditionSection:
    phase1_budget: int = 60
    phase2_budget: int = 30
    terminal_tol: float = 0.01
    fixed_point_iters: int = 8


@dataclass
class CampaignSection:
    amplitude: float = 0.01
    flights: int = 30
    perturbation: str = "uniform"   # or "normal" (clipped at the amplitude)
    workers: int = 1
    targets: int = 3


@dataclass
class ToolkitConfig:
    physical: PhysicalSection = field(default_factory=PhysicalSection)
    gains: GainsSection = field(default_factory=GainsSection)
    trajectory: TrajectorySection = field(default_factory=TrajectorySection)
    workspace: WorkspaceSection = field(default_factory=WorkspaceSection)
    targets: TargetsSection = field(default_factory=TargetsSection)
    integration: IntegrationSection = field(default_factory=IntegrationSection)
    sensitivity: SensitivitySection = field(default_factory=SensitivitySection)
    observability: ObservabilitySection = field(default_factory=ObservabilitySection)
    scalarization: ScalarizationSection = field(default_factory=ScalarizationSection)
    optimizer: OptimizerSection = field(default_factory=OptimizerSection)
    precondition: PreconditionSection = field(default_factory=PreconditionSection)
    campaign: CampaignSection = field(default_factory=CampaignSection)


def default_config():
    return ToolkitConfig()


def load_config(path):
    """Read an INI-style file on top of the defaults; unknown keys fail."""
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.read(path)
    cfg = ToolkitConfig()
    for section_field in dataclasses.fields(cfg):
        name = section_field.name
        if not parser.has_section(name):
            continue
        section = getattr(cfg, name)
        valid = {f.name: f for f in dataclasses.fields(section)}
        for key, raw in parser.items(name):
            if key not in valid:
                raise ValueError(f"unknown key [{name}] {key}")
            current = getattr(section, key)
            if isinstance(current, bool):
                value = raw.strip().lower() in ("1", "true", "yes", "on")
            elif isinstance(current, int):
                value = int(raw)
            elif isinstance(current, float):
                value = float(raw)
            else:
                value = raw.strip()
            setattr(section, key, value)
    return cfg


def config_to_dict(cfg: ToolkitConfig):
    return {f.name: dataclasses.asdict(getattr(cfg, f.name))
            for f in dataclasses.fields(cfg)}


def config_from_dict(data):
    """Rebuild a configuration from an artifact echo (inverse of to_dict)."""
    cfg = ToolkitConfig()
    for section_field in dataclasses.fields(cfg):
        payload = data.get(section_field.name, {})
        section = getattr(cfg, section_field.name)
        for f in dataclasses.fields(section):
            if f.name in payload:
                setattr(section, f.name, payload[f.name])
    return cfg


def _floats(text):
    return [float(v) for v in str(text).split(",") if str(v).strip() != ""]


# ---------------------------------------------------------------------------
# object factories
# ---------------------------------------------------------------------------

def build_constants(cfg: ToolkitConfig):
    p = cfg.physical
    return QuadrotorConstants(
        mass=p.mass,
        inertia=np.diag([p.inertia_xx, p.inertia_yy, p.inertia_zz]),
        arm_length=p.arm_length, gravity=p.gravity,
        u_min=p.u_min, u_max=p.u_max)


def build_nominal_params(cfg: ToolkitConfig):
    return RotorParams(cfg.physical.k_f, cfg.physical.k_m)


def build_gains(cfg: ToolkitConfig):
    g = cfg.gains
    return ControllerGains(g.k_r, g.k_v, g.k_i, g.k_q, g.k_w, g.xi_limit)


def build_sim_options(cfg: ToolkitConfig):
    i = cfg.integration
    return IntegratorOptions(i.method, i.fixed_step, i.rel_tol, i.abs_tol,
                             i.output_rate)


def build_sens_options(cfg: ToolkitConfig):
    i = cfg.integration
    step = cfg.sensitivity.step if cfg.sensitivity.step > 0 else i.fixed_step
    return IntegratorOptions(i.method, step, i.rel_tol, i.abs_tol, i.output_rate)


def build_obs_config(cfg: ToolkitConfig, constants=None):
    o = cfg.observability
    constants = constants or build_constants(cfg)
    model = MeasurementModel(
        channels=tuple(c.strip() for c in o.channels.split(",") if c.strip()),
        include_params=True, constants=constants)
    scaling = None
    if o.scaling_file:
        scaling = np.loadtxt(o.scaling_file).reshape(-1)
    return ObservabilityConfig(
        taylor_order=o.taylor_order, segments=o.segments,
        quad_nodes=o.quad_nodes, model=model, scaling=scaling,
        rotor_speed_inputs=o.rotor_speed_inputs, anchor=o.anchor)


def start_point(cfg: ToolkitConfig):
    return np.array(_floats(cfg.trajectory.start))


def free_orders(cfg: ToolkitConfig):
    return tuple(int(v) for v in str(cfg.trajectory.free_orders).split(","))


def build_plan(cfg: ToolkitConfig, target):
    """Uniform-knot way-point template from the configured start to target."""
    t = cfg.trajectory
    target = np.asarray(target, dtype=float)
    if target.shape == (3,):
        target = np.concatenate([target, [t.target_yaw]])
    return uniform_plan(start_point(cfg), target, t.duration, t.n_pieces,
                        t.n_jc, free_orders(cfg))


def build_context(cfg: ToolkitConfig, plan: WaypointPlan):
    constants = build_constants(cfg)
    return EvaluationContext(
        plan=plan, p_c=build_nominal_params(cfg), constants=constants,
        gains=build_gains(cfg), sim_opts=build_sim_options(cfg),
        sens_opts=build_sens_options(cfg),
        obs=build_obs_config(cfg, constants),
        rows=cfg.sensitivity.rows, norm=cfg.sensitivity.norm)


def workspace_bounds(cfg: ToolkitConfig):
    """Per-dimension (lower, upper) rows for (x, y, z, yaw)."""
    w = cfg.workspace
    return np.array([[w.x_min, w.x_max], [w.y_min, w.y_max],
                     [w.z_min, w.z_max], [w.yaw_min, w.yaw_max]])


def target_bounds(cfg: ToolkitConfig):
    t = cfg.targets
    return np.array([[t.x_min, t.x_max], [t.y_min, t.y_max],
                     [t.z_min, t.z_max]])


def draw_target(cfg: ToolkitConfig, rng):
    b = target_bounds(cfg)
    pos = rng.uniform(b[:, 0], b[:, 1])
    return np.concatenate([pos, [cfg.trajectory.target_yaw]])
