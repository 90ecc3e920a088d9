"""Control- and observability-aware quadrotor trajectory planning toolkit."""

from .config import ToolkitConfig, default_config, load_config
from .controller import ControllerGains, ReferencePoint
from .observability import GramianAccumulator, MeasurementModel, ObservabilityConfig
from .optimization import FeasibleSet, OptRun, minimize, run_pipeline
from .quadrotor import QuadrotorConstants, RotorParams
from .scalarization import ParetoAnchors, compute_anchors, tchebycheff
from .simulation import IntegratorOptions, SimTrace, simulate, tracking_error_norm
from .trajectory import PiecewiseBezier, Waypoint, WaypointPlan, solve_control_points

__version__ = "0.1.0"

__all__ = [
    "ToolkitConfig", "default_config", "load_config",
    "ControllerGains", "ReferencePoint",
    "GramianAccumulator", "MeasurementModel", "ObservabilityConfig",
    "FeasibleSet", "OptRun", "minimize", "run_pipeline",
    "QuadrotorConstants", "RotorParams",
    "ParetoAnchors", "compute_anchors", "tchebycheff",
    "IntegratorOptions", "SimTrace", "simulate", "tracking_error_norm",
    "PiecewiseBezier", "Waypoint", "WaypointPlan", "solve_control_points",
    "__version__",
]
