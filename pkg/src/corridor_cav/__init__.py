"""Signal-free coordination of automated vehicles through a two-intersection corridor."""

from .errors import DomainError, ScenarioError, SchedulingError, SingularSystemError
from .geometry import ConstraintConfig, CorridorGeometry, Relation, Route, Vehicle
from .ocp import solve_single_arc, solve_two_arc
from .sim import GippsParams, Scenario, Spawn, run_baseline, run_optimized

__version__ = "0.1.0"
